//! Random Fourier estimate of a Gaussian-mixture RPE against its closed form.

use flt::numerics::Rng;
use flt::spectral::{build_feature_pair, FourierFeatureConfig, PositionSet, SpectralRpe};

fn main() -> flt::Result<()> {
    let g = SpectralRpe::gaussian_mixture(&[1.0, -0.4], &[vec![0.0], vec![0.3]], &[1.0, 0.5])?;
    let pos = PositionSet::from_points(ndarray::Array2::from_shape_fn((6, 1), |(i, _)| 0.05 * i as f64))?;
    println!("{:>6} {:>12} {:>12} {:>12}", "delta", "exact", "r=64", "r=4096");
    let est: Vec<_> = [64, 4096]
        .iter()
        .map(|&r| build_feature_pair(&g, &FourierFeatureConfig::new(r), &pos, &mut Rng::new(7, 1)))
        .collect::<flt::Result<_>>()?;
    for j in 0..pos.len() {
        let delta = pos.displacement(0, j);
        println!(
            "{:>6.2} {:>12.6} {:>12.6} {:>12.6}",
            delta[0],
            g.eval_rpe_closed_form(&delta)?,
            est[0].estimate_f(0, j),
            est[1].estimate_f(0, j)
        );
    }
    Ok(())
}
