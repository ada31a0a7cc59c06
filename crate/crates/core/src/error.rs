use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got} ({context})")]
    DimensionMismatch {
        expected: usize,
        got: usize,
        context: &'static str,
    },

    #[error("size mismatch: {left} vs {right} ({context})")]
    SizeMismatch {
        left: usize,
        right: usize,
        context: &'static str,
    },

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("linear system is singular and the pseudo-inverse fallback failed")]
    Singular,

    #[error("optimizer did not converge: {0}")]
    NonConvergence(String),

    #[error("pricer callback failed at scenario {index}: {message}")]
    PricerFailure { index: usize, message: String },

    #[error("serialization error: {0}")]
    Serialization(String),
}

impl Error {
    pub fn dim(expected: usize, got: usize, context: &'static str) -> Self {
        Error::DimensionMismatch {
            expected,
            got,
            context,
        }
    }

    pub fn size(left: usize, right: usize, context: &'static str) -> Self {
        Error::SizeMismatch {
            left,
            right,
            context,
        }
    }
}
