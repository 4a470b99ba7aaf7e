//! Causal FLT through prefix sums; early rows do not see later tokens.

use flt::attention::{exact_rpe_attention, exact_rpe_mask, flt_attention, AttentionInputs, FavorMap};
use flt::numerics::{gaussian_matrix, relative_frobenius_error, Rng};
use flt::spectral::{build_feature_pair, FourierFeatureConfig, PositionSet, SpectralRpe, WeightPlacement};

fn main() -> flt::Result<()> {
    let (len, d) = (64, 8);
    let mut rng = Rng::new(3, 0);
    let s = 1.0 / (d as f64).sqrt();
    let mut inp = AttentionInputs::new(
        gaussian_matrix(&mut rng, len, d) * s,
        gaussian_matrix(&mut rng, len, d) * s,
        gaussian_matrix(&mut rng, len, 4),
        PositionSet::sequential(len),
    )?;
    let g = SpectralRpe::gaussian_mixture(&[1.0], &[vec![0.0]], &[0.1])?;
    let fc = FourierFeatureConfig {
        tau: 0.2,
        placement: WeightPlacement::Split,
        ..FourierFeatureConfig::new(64)
    };
    let pair = build_feature_pair(&g, &fc, &inp.positions, &mut rng.split(1))?;
    let map = FavorMap::sample(1024, pair.width() + d, false, &mut rng.split(2))?;

    let out = flt_attention(&inp, &pair, &map, true)?.values;
    let exact = exact_rpe_attention(&inp, &exact_rpe_mask(&g, &inp.positions)?, true)?;
    println!("relative error vs causal oracle: {:.4}", relative_frobenius_error(&out, &exact));

    let cut = len / 2;
    inp.v.slice_mut(ndarray::s![cut.., ..]).fill(100.0);
    let moved = flt_attention(&inp, &pair, &map, true)?.values;
    let head = ndarray::s![..cut, ..];
    let drift = (&out.slice(head) - &moved.slice(head)).iter().fold(0.0f64, |m, x| m.max(x.abs()));
    println!("first {cut} rows after changing later values: max change {drift:e}");
    Ok(())
}
