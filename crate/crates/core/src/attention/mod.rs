//! Exact RPE-masked softmax attention, positive random features, linear
//! (Performer / FLT) attention and the FFT Toeplitz baseline.

pub mod alloc;
mod exact;
mod favor;
mod linear;
mod toeplitz;

pub use exact::{exact_attention, exact_rpe_attention, exact_rpe_mask, toeplitz_rpe_row, Bias, RpeMask, MAX_ORACLE_LEN};
pub use favor::{favor_features, favor_features_complex, FavorFeatures, FavorMap, Stabilizer};
pub use linear::{
    causal_performer_attention, concat_scaled, flt_attention, flt_attention_complex, flt_features,
    performer_attention, performer_on_inputs, AttentionOutput, DENOMINATOR_FLOOR,
};
pub use toeplitz::loglinear_toeplitz_attention;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::spectral::PositionSet;

#[derive(Clone, Debug, PartialEq)]
pub struct AttentionInputs {
    pub q: Array2<f64>,
    pub k: Array2<f64>,
    pub v: Array2<f64>,
    pub positions: PositionSet,
}

impl AttentionInputs {
    pub fn new(q: Array2<f64>, k: Array2<f64>, v: Array2<f64>, positions: PositionSet) -> Result<Self> {
        let l = q.nrows();
        if k.nrows() != l || v.nrows() != l || positions.len() != l {
            return Err(Error::shape(
                "AttentionInputs",
                &[q.nrows(), k.nrows(), v.nrows(), positions.len()],
                &[l; 4],
            ));
        }
        if q.ncols() != k.ncols() {
            return Err(Error::shape("AttentionInputs", q.shape(), k.shape()));
        }
        Ok(Self { q, k, v, positions })
    }

    pub fn len(&self) -> usize {
        self.q.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.q.nrows() == 0
    }

    pub fn d_qk(&self) -> usize {
        self.q.ncols()
    }

    pub fn d_v(&self) -> usize {
        self.v.ncols()
    }
}
