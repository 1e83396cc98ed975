use thiserror::Error;

use crate::generator::ValidationReport;

/// Errors produced by the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("generator is not admissible: {0}")]
    NotAdmissible(ValidationReport),

    #[error("numerical failure in {what}: residual {residual:e}")]
    NumericalFailure { what: String, residual: f64 },

    #[error("explosion guard tripped: more than {cap} jumps before the horizon")]
    ExplosionGuard { cap: u64 },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidInput(msg.into()))
}
