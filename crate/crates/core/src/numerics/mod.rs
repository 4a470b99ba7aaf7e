//! Deterministic numerical substrate: RNG, complex scalars, dense
//! matrices, FFTs and the quadrature oracle.

pub mod complex;
pub mod fft;
pub mod matrix;
pub mod quadrature;
pub mod rng;

pub use complex::{cis, principal_sqrt, Complex};
pub use fft::{fft, FftPlan, ToeplitzOperator};
pub use matrix::{gaussian_matrix, matmul, relative_frobenius_error, ComplexMatrix, RealMatrix};
pub use quadrature::{quadrature_inverse_ft, QuadratureSpec};
pub use rng::{gaussian_sample, Rng};
