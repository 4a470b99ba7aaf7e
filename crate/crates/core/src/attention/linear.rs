use ndarray::{s, Array1, Array2, ArrayView2};

use super::favor::{favor_features, favor_features_complex, FavorMap, Stabilizer};
use super::AttentionInputs;
use crate::error::{Error, Result};
use crate::numerics::{Complex, ComplexMatrix};
use crate::spectral::{FeatureMatrices, RpeFeaturePair};

/// Lower bound applied to attention normalizers before division.
pub const DENOMINATOR_FLOOR: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct AttentionOutput {
    pub values: Array2<f64>,
    /// Rows whose normalizer fell below [`DENOMINATOR_FLOOR`].
    pub clamped_rows: usize,
}

fn check(qp: &ArrayView2<f64>, kp: &ArrayView2<f64>, v: &ArrayView2<f64>) -> Result<()> {
    if qp.dim() != kp.dim() || v.nrows() != qp.nrows() {
        return Err(Error::shape("performer_attention", qp.shape(), kp.shape()));
    }
    Ok(())
}

/// `D̂⁻¹ (Q' ((K')ᵀ V))` with `D̂ = diag(Q' ((K')ᵀ 1))`.
pub fn performer_attention(qp: ArrayView2<f64>, kp: ArrayView2<f64>, v: ArrayView2<f64>) -> Result<AttentionOutput> {
    check(&qp, &kp, &v)?;
    let kv = kp.t().dot(&v);
    let ksum = kp.sum_axis(ndarray::Axis(0));
    let mut values = qp.dot(&kv);
    let den = qp.dot(&ksum);
    let mut clamped_rows = 0;
    for (mut row, &d) in values.rows_mut().into_iter().zip(den.iter()) {
        let d = if d < DENOMINATOR_FLOOR {
            clamped_rows += 1;
            DENOMINATOR_FLOOR
        } else {
            d
        };
        row /= d;
    }
    Ok(AttentionOutput { values, clamped_rows })
}

/// Prefix-sum variant: row `i` only attends to keys `j <= i`.
pub fn causal_performer_attention(
    qp: ArrayView2<f64>,
    kp: ArrayView2<f64>,
    v: ArrayView2<f64>,
) -> Result<AttentionOutput> {
    check(&qp, &kp, &v)?;
    let (l, m) = qp.dim();
    let dv = v.ncols();
    let mut state = Array2::<f64>::zeros((m, dv));
    let mut ksum = Array1::<f64>::zeros(m);
    let mut values = Array2::zeros((l, dv));
    let mut clamped_rows = 0;
    for i in 0..l {
        let k_i = kp.row(i);
        let v_i = v.row(i);
        for (f, &kf) in k_i.iter().enumerate() {
            if kf != 0.0 {
                state.row_mut(f).scaled_add(kf, &v_i);
            }
        }
        ksum += &k_i;
        let q_i = qp.row(i);
        let mut d = q_i.dot(&ksum);
        if d < DENOMINATOR_FLOOR {
            clamped_rows += 1;
            d = DENOMINATOR_FLOOR;
        }
        let num = q_i.dot(&state);
        values.row_mut(i).assign(&(num / d));
    }
    Ok(AttentionOutput { values, clamped_rows })
}

/// `[n, x · d^{-1/4}]`.
pub fn concat_scaled(n: &Array2<f64>, x: &Array2<f64>, d_qk: usize) -> Result<Array2<f64>> {
    if n.nrows() != x.nrows() {
        return Err(Error::shape("concat_scaled", n.shape(), x.shape()));
    }
    let w = n.ncols();
    let mut out = Array2::zeros((x.nrows(), w + x.ncols()));
    out.slice_mut(s![.., ..w]).assign(n);
    out.slice_mut(s![.., w..]).assign(&(x * (d_qk as f64).powf(-0.25)));
    Ok(out)
}

/// Query and key positive features for FLT: `φ([N1, Q d^{-1/4}])`, `φ([N2, K d^{-1/4}])`.
pub fn flt_features(inp: &AttentionInputs, pair: &RpeFeaturePair, map: &FavorMap) -> Result<(Array2<f64>, Array2<f64>)> {
    let (n1, n2) = pair.real_features()?;
    if pair.len() != inp.len() {
        return Err(Error::shape("flt_attention", &[pair.len()], &[inp.len()]));
    }
    if map.dim() != n1.ncols() + inp.d_qk() {
        return Err(Error::shape("flt_attention", &[map.dim()], &[n1.ncols() + inp.d_qk()]));
    }
    let q_hat = concat_scaled(n1, &inp.q, inp.d_qk())?;
    let k_hat = concat_scaled(n2, &inp.k, inp.d_qk())?;
    let qp = favor_features(&q_hat, map, Stabilizer::PerRow)?.values;
    let kp = favor_features(&k_hat, map, Stabilizer::Global)?.values;
    Ok((qp, kp))
}

/// RPE-masked softmax attention, linearized jointly through the
/// concatenated features.
pub fn flt_attention(inp: &AttentionInputs, pair: &RpeFeaturePair, map: &FavorMap, causal: bool) -> Result<AttentionOutput> {
    let (qp, kp) = flt_features(inp, pair, map)?;
    if causal {
        causal_performer_attention(qp.view(), kp.view(), inp.v.view())
    } else {
        performer_attention(qp.view(), kp.view(), inp.v.view())
    }
}

/// Plain Performer on `Q d^{-1/4}`, `K d^{-1/4}`.
pub fn performer_on_inputs(inp: &AttentionInputs, map: &FavorMap, causal: bool) -> Result<AttentionOutput> {
    let empty = Array2::zeros((inp.len(), 0));
    let q = concat_scaled(&empty, &inp.q, inp.d_qk())?;
    let k = concat_scaled(&empty, &inp.k, inp.d_qk())?;
    let qp = favor_features(&q, map, Stabilizer::PerRow)?.values;
    let kp = favor_features(&k, map, Stabilizer::Global)?.values;
    if causal {
        causal_performer_attention(qp.view(), kp.view(), inp.v.view())
    } else {
        performer_attention(qp.view(), kp.view(), inp.v.view())
    }
}

/// FLT with complex `φ/ψ` features, unstabilized; returns the real part.
pub fn flt_attention_complex(inp: &AttentionInputs, pair: &RpeFeaturePair, map: &FavorMap) -> Result<Array2<f64>> {
    let FeatureMatrices::Complex { n1, n2 } = &pair.features else {
        return Err(Error::Unsupported("complex FLT needs complex features".into()));
    };
    let scale = (inp.d_qk() as f64).powf(-0.25);
    let hat = |n: &ComplexMatrix, x: &Array2<f64>| {
        let w = n.ncols();
        let mut out = ComplexMatrix::zeros((x.nrows(), w + x.ncols()));
        out.slice_mut(s![.., ..w]).assign(n);
        out.slice_mut(s![.., w..]).assign(&x.mapv(|a| Complex::new(a * scale, 0.0)));
        out
    };
    let qp = favor_features_complex(&hat(n1, &inp.q), map)?;
    let kp = favor_features_complex(&hat(n2, &inp.k), map)?;
    let v = inp.v.mapv(|a| Complex::new(a, 0.0));
    let num = qp.dot(&kp.t().dot(&v));
    let den = qp.dot(&kp.t().dot(&Array1::from_elem(inp.len(), Complex::new(1.0, 0.0))));
    let mut out = Array2::zeros(num.raw_dim());
    for ((i, c), z) in num.indexed_iter() {
        out[[i, c]] = (z / den[i]).re;
    }
    Ok(out)
}
