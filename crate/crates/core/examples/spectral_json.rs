//! Spectral RPE parameters to JSON and back.

use flt::spectral::SpectralRpe;

fn main() -> flt::Result<()> {
    let rpes = [
        SpectralRpe::gaussian_mixture(&[1.0, -0.4], &[vec![0.0], vec![0.3]], &[1.0, 0.5])?,
        SpectralRpe::local_sinc_sum(&[0.5, 1.0], &[1.2, 2.6])?,
        SpectralRpe::local_sinc_product(1.0, &[0.5], &[2])?,
        SpectralRpe::gaussian_basis_3d(&[1.0, 0.5], &[1.0, 0.6])?,
    ];
    for g in &rpes {
        let text = g.to_json()?;
        let back = SpectralRpe::from_json(&text)?;
        println!("{text}");
        assert_eq!(back.parameters(), g.parameters());
    }
    Ok(())
}
