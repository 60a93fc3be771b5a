use thiserror::Error;

use crate::optimizer::SequentialTrace;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("volume too small for one mode (k*r0 = {0})")]
    VolumeTooSmall(f64),

    #[error("covariance is not positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("shape mismatch: expected {expected}, got {got}")]
    Shape { expected: String, got: String },

    #[error("sequential optimization did not converge after {} sides", .0.iterations.len().saturating_sub(1))]
    NoConvergence(Box<SequentialTrace>),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}

pub(crate) fn shape(expected: impl ToString, got: impl ToString) -> Error {
    Error::Shape {
        expected: expected.to_string(),
        got: got.to_string(),
    }
}
