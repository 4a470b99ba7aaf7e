//! O(L log L) Toeplitz-masked Performer against the dense masked softmax.

use flt::attention::{
    concat_scaled, exact_attention, favor_features, loglinear_toeplitz_attention, toeplitz_rpe_row, Bias, FavorMap,
    Stabilizer,
};
use flt::numerics::{gaussian_matrix, relative_frobenius_error, Rng};
use flt::spectral::{PositionSet, SpectralRpe};

fn main() -> flt::Result<()> {
    let (len, d) = (256, 16);
    let mut rng = Rng::new(1, 0);
    let s = 1.0 / (d as f64).sqrt();
    let q = gaussian_matrix(&mut rng, len, d) * s;
    let k = gaussian_matrix(&mut rng, len, d) * s;
    let v = gaussian_matrix(&mut rng, len, d);
    let g = SpectralRpe::indicator(1.0, 8.0)?;
    let row = toeplitz_rpe_row(&g, &PositionSet::sequential(len))?;
    let exp_row: Vec<f64> = row.iter().map(|x| x.exp()).collect();
    let exact = exact_attention(q.view(), k.view(), v.view(), Bias::Toeplitz(&row), false)?;

    let empty = ndarray::Array2::zeros((len, 0));
    let (qs, ks) = (concat_scaled(&empty, &q, d)?, concat_scaled(&empty, &k, d)?);
    for m in [16, 64, 256, 1024] {
        let map = FavorMap::sample(m, d, false, &mut rng.split(m as u64))?;
        let qp = favor_features(&qs, &map, Stabilizer::PerRow)?.values;
        let kp = favor_features(&ks, &map, Stabilizer::Global)?.values;
        let out = loglinear_toeplitz_attention(qp.view(), kp.view(), v.view(), &exp_row)?.values;
        println!("m={m:>5}  rel err {:.4}", relative_frobenius_error(&out, &exact));
    }
    Ok(())
}
