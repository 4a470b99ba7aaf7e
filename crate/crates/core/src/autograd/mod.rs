//! Minimal reverse-mode differentiation over dense real matrices.
//!
//! Complex-valued quantities are carried as separate real and imaginary
//! tensors, so the tape itself only ever sees real numbers.

mod optim;
mod tape;

pub use optim::{Adam, AdamConfig, LrSchedule};
pub use tape::{Gradients, SumAxis, Tape, Var};

use ndarray::Array2;

use crate::error::{Error, Result};

/// Denominator floor of the relative error.
pub const GRADCHECK_FLOOR: f64 = 1e-6;

/// Compares reverse-mode gradients of a scalar function against central
/// differences with step `h`.
///
/// Returns `max_k |analytic_k - numeric_k| / max(|analytic_k|, |numeric_k|, 1e-6)`;
/// components below 1e-6 are under finite-difference resolution.
/// The caller must keep `theta` away from non-smooth points such as
/// `clamp_min` boundaries; results there are meaningless.
pub fn gradcheck<F>(f: F, theta: &Array2<f64>, h: f64) -> Result<f64>
where
    F: Fn(&mut Tape, Var) -> Result<Var>,
{
    let analytic = {
        let mut tape = Tape::new();
        let x = tape.param(theta.clone());
        let y = f(&mut tape, x)?;
        if tape.shape(y) != [1, 1] {
            return Err(Error::shape("gradcheck", &tape.shape(y), &[1, 1]));
        }
        tape.backward(y)?.get_or_zeros(x, theta)
    };
    let eval = |p: &Array2<f64>| -> Result<f64> {
        let mut tape = Tape::new();
        let x = tape.constant(p.clone());
        let y = f(&mut tape, x)?;
        Ok(tape.scalar_value(y))
    };
    let mut worst = 0.0f64;
    let mut probe = theta.clone();
    for (idx, a) in analytic.indexed_iter() {
        let orig = probe[idx];
        probe[idx] = orig + h;
        let up = eval(&probe)?;
        probe[idx] = orig - h;
        let down = eval(&probe)?;
        probe[idx] = orig;
        let numeric = (up - down) / (2.0 * h);
        let denom = a.abs().max(numeric.abs()).max(GRADCHECK_FLOOR);
        worst = worst.max((a - numeric).abs() / denom);
    }
    Ok(worst)
}
