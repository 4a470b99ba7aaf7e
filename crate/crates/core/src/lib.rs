//! Attention with learnable relative positional encodings, linearized
//! through random Fourier and positive random features.

pub mod attention;
pub mod cli;
pub mod autograd;
pub mod error;
pub mod hexfloat;
pub mod model;
pub mod numerics;
pub mod spectral;

pub use error::{Error, Result};

/// Crate version, embedded in every CSV header and checkpoint.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
