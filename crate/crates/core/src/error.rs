use thiserror::Error;

/// Errors raised by the dynamics, optimizer, estimator and simulation layers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("non-invertible model: mass matrix determinant {det:e}")]
    NonInvertibleModel { det: f64 },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("estimator degenerate: {0}")]
    EstimatorDegenerate(String),
    #[error("numerical degeneracy: {0}")]
    NumericalDegeneracy(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
}

pub type Result<T> = std::result::Result<T, Error>;
