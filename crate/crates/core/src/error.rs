use thiserror::Error;

/// Errors raised across the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not square: {0}x{1}")]
    NotSquare(usize, usize),

    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),

    #[error("not Hermitian (anti-Hermitian part {0:e} exceeds tolerance)")]
    NotHermitian(f64),

    #[error("trace is not 1 (got {0})")]
    InvalidTrace(f64),

    #[error("not positive semidefinite (min eigenvalue {0:e})")]
    NotPsd(f64),

    #[error("not a POM element (max eigenvalue {0})")]
    NotPovmElement(f64),

    #[error("unsupported dimension {0}: {1}")]
    UnsupportedDimension(usize, &'static str),

    #[error("parameter out of range: {0}")]
    OutOfRange(String),

    #[error("invalid measurement setup: {0}")]
    InvalidSetup(String),

    #[error("outcome sum is singular (condition number {0:e}); support-restricted estimation is not provided")]
    SingularOutcomeSum(f64),

    #[error("strategy not applicable: {0}")]
    StrategyInapplicable(&'static str),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
