//! Error type shared by all numerical modules.

use thiserror::Error;

/// Errors produced by model validation, solvers and transform numerics.
#[derive(Debug, Error)]
pub enum CoreError {
    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("matrix is singular or not positive definite: {0}")]
    SingularMatrix(String),

    #[error("no sign change found while bracketing: {0}")]
    NoBracket(String),

    #[error("transform argument outside the attainable domain: {0}")]
    OutOfDomain(String),

    #[error("tilted density has numerically zero mass")]
    ZeroMass,

    #[error("spectrum has zero mean; S-transform undefined")]
    ZeroMean,

    #[error("evaluation point within {0:.3e} of a spectrum atom")]
    PoleHit(f64),

    #[error("degenerate (point-mass) spectrum: {0}")]
    DegenerateSpectrum(String),

    #[error("resolvent diagonal entry is zero at index {0}")]
    ZeroDiagonal(usize),

    #[error("Hadamard size {0} is not a power of two")]
    NotPowerOfTwo(usize),

    #[error("fixed-point iteration did not converge: {0}")]
    NotConverged(String),
}

pub type Result<T> = std::result::Result<T, CoreError>;

impl From<ndarray_linalg::error::LinalgError> for CoreError {
    fn from(e: ndarray_linalg::error::LinalgError) -> Self {
        CoreError::SingularMatrix(e.to_string())
    }
}
