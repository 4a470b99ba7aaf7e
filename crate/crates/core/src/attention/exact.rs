use ndarray::{s, Array2, ArrayView2, Axis};

use super::AttentionInputs;
use crate::error::{Error, Result};
use crate::spectral::{PositionSet, SpectralRpe};

/// Largest sequence for which a dense mask is materialized.
pub const MAX_ORACLE_LEN: usize = 8192;

const ROW_BLOCK: usize = 64;

/// Dense RPE mask `N_ij = f(r_i - r_j)`.
#[derive(Clone, Debug, PartialEq)]
pub struct RpeMask {
    pub n: Array2<f64>,
}

impl RpeMask {
    pub fn zeros(len: usize) -> Self {
        Self { n: Array2::zeros((len, len)) }
    }

    pub fn len(&self) -> usize {
        self.n.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.n.is_empty()
    }
}

pub fn exact_rpe_mask(g: &SpectralRpe, pos: &PositionSet) -> Result<RpeMask> {
    let l = pos.len();
    if l > MAX_ORACLE_LEN {
        return Err(Error::OracleScope(format!("dense mask for L={l} exceeds {MAX_ORACLE_LEN}")));
    }
    let mut n = Array2::zeros((l, l));
    for i in 0..l {
        for j in 0..l {
            n[[i, j]] = g.eval_rpe_closed_form(&pos.displacement(i, j))?;
        }
    }
    Ok(RpeMask { n })
}

/// `f(k)` for `k = -(L-1)..=L-1` on sequential positions, indexed `k + L - 1`.
pub fn toeplitz_rpe_row(g: &SpectralRpe, pos: &PositionSet) -> Result<Vec<f64>> {
    if !pos.is_sequential() {
        return Err(Error::Unsupported(
            "Toeplitz masks need 1-D positions with unit spacing".into(),
        ));
    }
    let l = pos.len() as i64;
    (-(l - 1)..l).map(|k| g.eval_rpe_closed_form(&[k as f64])).collect()
}

/// Where the additive logit bias comes from.
#[derive(Clone, Copy, Debug)]
pub enum Bias<'a> {
    None,
    Dense(&'a Array2<f64>),
    /// `2L-1` values, entry `k + L - 1` is the bias on diagonal `i - j = k`.
    Toeplitz(&'a [f64]),
}

/// `D⁻¹ A V` with `A = exp(N + QKᵀ/√d_QK)`, computed in row blocks with a
/// per-row max shift.
pub fn exact_rpe_attention(inp: &AttentionInputs, mask: &RpeMask, causal: bool) -> Result<Array2<f64>> {
    if mask.len() != inp.len() {
        return Err(Error::shape("exact_rpe_attention", mask.n.shape(), &[inp.len(), inp.len()]));
    }
    exact_attention(inp.q.view(), inp.k.view(), inp.v.view(), Bias::Dense(&mask.n), causal)
}

pub fn exact_attention(
    q: ArrayView2<f64>,
    k: ArrayView2<f64>,
    v: ArrayView2<f64>,
    bias: Bias<'_>,
    causal: bool,
) -> Result<Array2<f64>> {
    let l = q.nrows();
    if k.nrows() != l || v.nrows() != l || k.ncols() != q.ncols() {
        return Err(Error::shape("exact_attention", q.shape(), k.shape()));
    }
    match bias {
        Bias::Dense(n) if n.dim() != (l, l) => return Err(Error::shape("exact_attention", n.shape(), &[l, l])),
        Bias::Toeplitz(row) if row.len() != 2 * l - 1 => {
            return Err(Error::shape("exact_attention", &[row.len()], &[2 * l - 1]))
        }
        _ => {}
    }
    let scale = 1.0 / (q.ncols().max(1) as f64).sqrt();
    let mut out = Array2::zeros((l, v.ncols()));
    let mut start = 0;
    while start < l {
        let end = (start + ROW_BLOCK).min(l);
        let mut logits = q.slice(s![start..end, ..]).dot(&k.t()) * scale;
        for (bi, mut row) in logits.axis_iter_mut(Axis(0)).enumerate() {
            let i = start + bi;
            match bias {
                Bias::None => {}
                Bias::Dense(n) => row += &n.row(i),
                Bias::Toeplitz(t) => {
                    for (j, x) in row.iter_mut().enumerate() {
                        *x += t[i + l - 1 - j];
                    }
                }
            }
            let visible = if causal { i + 1 } else { l };
            let max = row.iter().take(visible).fold(f64::NEG_INFINITY, |a, &b| a.max(b));
            let mut total = 0.0;
            for (j, x) in row.iter_mut().enumerate() {
                *x = if j < visible { (*x - max).exp() } else { 0.0 };
                total += *x;
            }
            row /= total;
        }
        out.slice_mut(s![start..end, ..]).assign(&logits.dot(&v));
        start = end;
    }
    Ok(out)
}
