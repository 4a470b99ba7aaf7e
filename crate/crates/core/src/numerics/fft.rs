//! Power-of-two FFTs and FFT-based Toeplitz matrix-vector products.
//!
//! Transforms are unscaled in both directions: `inverse(forward(x)) = n * x`.

use std::sync::Arc;

use rustfft::{Fft, FftPlanner};

use super::complex::Complex;
use crate::error::{Error, Result};

/// Cached forward/inverse plans for one power-of-two length.
#[derive(Clone)]
pub struct FftPlan {
    len: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for FftPlan {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FftPlan").field("len", &self.len).finish()
    }
}

impl FftPlan {
    pub fn new(len: usize) -> Result<Self> {
        if len == 0 || !len.is_power_of_two() {
            return Err(Error::NotPowerOfTwo(len));
        }
        let mut planner = FftPlanner::new();
        Ok(Self {
            len,
            forward: planner.plan_fft_forward(len),
            inverse: planner.plan_fft_inverse(len),
        })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn forward(&self, buf: &mut [Complex]) {
        debug_assert_eq!(buf.len(), self.len);
        self.forward.process(buf);
    }

    /// Unscaled inverse transform.
    pub fn inverse(&self, buf: &mut [Complex]) {
        debug_assert_eq!(buf.len(), self.len);
        self.inverse.process(buf);
    }
}

/// Unscaled DFT of `x` (or its inverse). The length must be a power of two.
pub fn fft(x: &[Complex], inverse: bool) -> Result<Vec<Complex>> {
    let plan = FftPlan::new(x.len())?;
    let mut buf = x.to_vec();
    if inverse {
        plan.inverse(&mut buf);
    } else {
        plan.forward(&mut buf);
    }
    Ok(buf)
}

/// Real `L x L` Toeplitz matrix applied through a circulant embedding of
/// power-of-two size `>= 2L - 1`.
#[derive(Clone, Debug)]
pub struct ToeplitzOperator {
    dim: usize,
    plan: FftPlan,
    spectrum: Vec<Complex>,
}

impl ToeplitzOperator {
    /// `diagonals[k + dim - 1]` is the value on the diagonal `i - j = k`,
    /// for `k` in `-(dim-1)..=dim-1`.
    pub fn new(diagonals: &[f64]) -> Result<Self> {
        if diagonals.is_empty() || diagonals.len().is_multiple_of(2) {
            return Err(Error::invalid(format!(
                "Toeplitz diagonals must have odd length 2L-1, got {}",
                diagonals.len()
            )));
        }
        let dim = diagonals.len().div_ceil(2);
        let n = (2 * dim - 1).next_power_of_two().max(1);
        let plan = FftPlan::new(n)?;
        // First column of the circulant: t_0, t_1, ..., t_{L-1}, 0..., t_{-(L-1)}, ..., t_{-1}.
        let mut col = vec![Complex::new(0.0, 0.0); n];
        for k in 0..dim {
            col[k] = Complex::new(diagonals[k + dim - 1], 0.0);
        }
        for k in 1..dim {
            col[n - k] = Complex::new(diagonals[dim - 1 - k], 0.0);
        }
        plan.forward(&mut col);
        Ok(Self {
            dim,
            plan,
            spectrum: col,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn padded_len(&self) -> usize {
        self.plan.len()
    }

    /// Applies the operator to two real vectors at once by packing them into
    /// the real and imaginary parts of one complex transform.
    pub fn apply_pair(&self, a: &[f64], b: &[f64], out_a: &mut [f64], out_b: &mut [f64], scratch: &mut Vec<Complex>) {
        let n = self.plan.len();
        scratch.clear();
        scratch.extend(a.iter().zip(b).map(|(&x, &y)| Complex::new(x, y)));
        scratch.resize(n, Complex::new(0.0, 0.0));
        self.plan.forward(scratch);
        for (s, h) in scratch.iter_mut().zip(&self.spectrum) {
            *s *= h;
        }
        self.plan.inverse(scratch);
        let inv = 1.0 / n as f64;
        for i in 0..self.dim {
            out_a[i] = scratch[i].re * inv;
            out_b[i] = scratch[i].im * inv;
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let zeros = vec![0.0; x.len()];
        let mut out = vec![0.0; self.dim];
        let mut unused = vec![0.0; self.dim];
        let mut scratch = Vec::new();
        self.apply_pair(x, &zeros, &mut out, &mut unused, &mut scratch);
        out
    }
}
