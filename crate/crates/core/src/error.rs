use thiserror::Error;

/// Errors raised by the numerical routines of this crate.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("matrix is not positive definite (smallest eigenvalue {min_eigenvalue:e})")]
    NotPositiveDefinite { min_eigenvalue: f64 },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid parameter vector: {0}")]
    InvalidParameter(String),

    #[error("adaptive quadrature did not reach tolerance {tolerance:e} (estimated error {estimate:e})")]
    QuadratureNotConverged { tolerance: f64, estimate: f64 },

    #[error("Kalman filter diverged at step {step}: innovation variance {variance:e}")]
    FilterDivergence { step: usize, variance: f64 },

    #[error("finite-difference step underflow in component {component}")]
    StepUnderflow { component: usize },

    #[error("at least two included replications are required, got {0}")]
    InsufficientReplications(usize),

    #[error("no included replications")]
    NoIncludedReplications,

    #[error("unsupported: {0}")]
    Unsupported(String),
}

pub type Result<T> = std::result::Result<T, Error>;
