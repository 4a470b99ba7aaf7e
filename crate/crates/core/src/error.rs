use thiserror::Error;

/// Errors raised anywhere in the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in `{op}`: {lhs:?} vs {rhs:?}")]
    Shape {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    #[error("FFT length {0} is not a power of two; pad the input first")]
    NotPowerOfTwo(usize),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("no closed form for {0}; use the quadrature oracle instead")]
    NoClosedForm(&'static str),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("outside oracle scope: {0}")]
    OracleScope(String),

    #[error("variable does not belong to this tape")]
    ForeignVar,

    #[error("training diverged at step {step} (loss {loss}); rpe parameters: {snapshot}")]
    Diverged {
        step: usize,
        loss: f64,
        snapshot: String,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn shape(op: &'static str, lhs: &[usize], rhs: &[usize]) -> Self {
        Error::Shape {
            op,
            lhs: lhs.to_vec(),
            rhs: rhs.to_vec(),
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}
