//! Relative error of FLT and plain Performer against the dense RPE oracle
//! as the feature budgets grow.

use flt::attention::{exact_rpe_attention, exact_rpe_mask, flt_attention, performer_on_inputs, AttentionInputs, FavorMap};
use flt::numerics::{gaussian_matrix, relative_frobenius_error, Rng};
use flt::spectral::{build_feature_pair, FourierFeatureConfig, PositionSet, SpectralRpe, WeightPlacement};

fn main() -> flt::Result<()> {
    let (len, d) = (128, 16);
    let mut rng = Rng::new(0, 1);
    let s = 1.0 / (d as f64).sqrt();
    let inp = AttentionInputs::new(
        gaussian_matrix(&mut rng, len, d) * s,
        gaussian_matrix(&mut rng, len, d) * s,
        gaussian_matrix(&mut rng, len, d),
        PositionSet::sequential(len),
    )?;
    let g = SpectralRpe::gaussian_mixture(&[1.5], &[vec![0.0]], &[0.05])?;
    let exact = exact_rpe_attention(&inp, &exact_rpe_mask(&g, &inp.positions)?, false)?;

    println!("{:>5} {:>6} {:>10} {:>10}", "r", "m", "flt", "performer");
    for (r, m) in [(8, 32), (32, 128), (128, 512), (256, 2048)] {
        let fc = FourierFeatureConfig {
            tau: 0.1,
            placement: WeightPlacement::Split,
            ..FourierFeatureConfig::new(r)
        };
        let pair = build_feature_pair(&g, &fc, &inp.positions, &mut rng.split(r as u64))?;
        let map = FavorMap::sample(m, pair.width() + d, false, &mut rng.split(m as u64))?;
        let flt = flt_attention(&inp, &pair, &map, false)?.values;
        let perf = performer_on_inputs(&inp, &map.columns(pair.width(), pair.width() + d), false)?.values;
        println!(
            "{r:>5} {m:>6} {:>10.4} {:>10.4}",
            relative_frobenius_error(&flt, &exact),
            relative_frobenius_error(&perf, &exact)
        );
    }
    Ok(())
}
