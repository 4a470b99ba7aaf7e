//! Gaussian-basis RPE over 3-D atom coordinates. A rigid translation leaves
//! the estimated mask unchanged; the attention output only moves by FAVOR noise.

use flt::attention::{exact_rpe_attention, exact_rpe_mask, flt_attention, AttentionInputs, FavorMap};
use flt::numerics::{gaussian_matrix, relative_frobenius_error, Rng};
use flt::spectral::{build_feature_pair_with, sample_frequencies, FourierFeatureConfig, PositionSet, SpectralRpe, WeightPlacement};

fn main() -> flt::Result<()> {
    let (atoms, d) = (48, 8);
    let mut rng = Rng::new(5, 0);
    let coords = gaussian_matrix(&mut rng, atoms, 3) * 1.5;
    let pos = PositionSet::from_points(coords.clone())?;
    let shifted = PositionSet::from_points(coords + 10.0)?;
    let s = 1.0 / (d as f64).sqrt();
    let q = gaussian_matrix(&mut rng, atoms, d) * s;
    let k = gaussian_matrix(&mut rng, atoms, d) * s;
    let v = gaussian_matrix(&mut rng, atoms, d);

    let g = SpectralRpe::gaussian_basis_3d(&[1.0, 0.5], &[1.0, 0.6])?;
    let fc = FourierFeatureConfig {
        tau: 1.0 / (1.2 * std::f64::consts::PI),
        placement: WeightPlacement::Split,
        ..FourierFeatureConfig::new(256)
    };
    let freqs = sample_frequencies(&fc, 3, &mut rng.split(1))?;
    let inp = AttentionInputs::new(q.clone(), k.clone(), v.clone(), pos)?;
    let moved = AttentionInputs::new(q, k, v, shifted)?;
    let pair = build_feature_pair_with(&g, &fc, &inp.positions, freqs.clone())?;
    let pair_moved = build_feature_pair_with(&g, &fc, &moved.positions, freqs)?;
    let map = FavorMap::sample(2048, pair.width() + d, false, &mut rng.split(2))?;

    let exact = exact_rpe_attention(&inp, &exact_rpe_mask(&g, &inp.positions)?, false)?;
    let a = flt_attention(&inp, &pair, &map, false)?.values;
    let b = flt_attention(&moved, &pair_moved, &map, false)?.values;
    println!("rel err vs oracle: {:.4}", relative_frobenius_error(&a, &exact));
    println!("rel err after translation: {:.4}", relative_frobenius_error(&b, &exact));
    println!(
        "mask change under translation: {:.2e}",
        relative_frobenius_error(&pair_moved.estimated_mask(), &pair.estimated_mask())
    );
    Ok(())
}
