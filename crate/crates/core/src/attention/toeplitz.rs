use ndarray::{Array2, ArrayView2};

use super::linear::{AttentionOutput, DENOMINATOR_FLOOR};
use crate::error::{Error, Result};
use crate::numerics::ToeplitzOperator;

/// Exact-RPE baseline `D⁻¹ (exp(N) ∘ (Q' K'ᵀ)) V` for Toeplitz `exp(N)`,
/// using `m (d_V + 1)` FFT matrix-vector products.
///
/// `exp_row[k + L - 1]` is `exp(f(k))` on the diagonal `i - j = k`.
pub fn loglinear_toeplitz_attention(
    qp: ArrayView2<f64>,
    kp: ArrayView2<f64>,
    v: ArrayView2<f64>,
    exp_row: &[f64],
) -> Result<AttentionOutput> {
    let (l, m) = qp.dim();
    if kp.dim() != (l, m) || v.nrows() != l {
        return Err(Error::shape("loglinear_toeplitz_attention", qp.shape(), kp.shape()));
    }
    if exp_row.len() != 2 * l - 1 {
        return Err(Error::shape("loglinear_toeplitz_attention", &[exp_row.len()], &[2 * l - 1]));
    }
    if exp_row.iter().any(|x| !x.is_finite()) {
        return Err(Error::invalid("Toeplitz row must be finite"));
    }
    let op = ToeplitzOperator::new(exp_row)?;
    let dv = v.ncols();
    // Column `dv` accumulates the normalizer.
    let mut acc = Array2::<f64>::zeros((l, dv + 1));
    let jobs: Vec<(usize, usize)> = (0..m).flat_map(|f| (0..=dv).map(move |c| (f, c))).collect();
    let input = |(f, c): (usize, usize), buf: &mut Vec<f64>| {
        buf.clear();
        let k = kp.column(f);
        if c == dv {
            buf.extend(k.iter());
        } else {
            buf.extend(k.iter().zip(v.column(c)).map(|(a, b)| a * b));
        }
    };
    let (mut a, mut b) = (Vec::with_capacity(l), Vec::with_capacity(l));
    let (mut out_a, mut out_b) = (vec![0.0; l], vec![0.0; l]);
    let mut scratch = Vec::with_capacity(op.padded_len());
    for pair in jobs.chunks(2) {
        input(pair[0], &mut a);
        match pair.get(1) {
            Some(&job) => input(job, &mut b),
            None => {
                b.clear();
                b.resize(l, 0.0);
            }
        }
        op.apply_pair(&a, &b, &mut out_a, &mut out_b, &mut scratch);
        for (job, out) in pair.iter().zip([&out_a, &out_b]) {
            let (f, c) = *job;
            let q = qp.column(f);
            for i in 0..l {
                acc[[i, c]] += q[i] * out[i];
            }
        }
    }
    let mut clamped_rows = 0;
    let mut values = Array2::zeros((l, dv));
    for i in 0..l {
        let mut d = acc[[i, dv]];
        if d < DENOMINATOR_FLOOR {
            clamped_rows += 1;
            d = DENOMINATOR_FLOOR;
        }
        for c in 0..dv {
            values[[i, c]] = acc[[i, c]] / d;
        }
    }
    Ok(AttentionOutput { values, clamped_rows })
}
