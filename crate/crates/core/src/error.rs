use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("matrix is not symmetric (max deviation {deviation:e})")]
    NotSymmetric { deviation: f64 },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("non-positive mass weight {value} at index {index}")]
    NonPositiveMass { index: usize, value: f64 },

    #[error("matrix is singular or too ill-conditioned (condition estimate {condition:e})")]
    IllConditioned { condition: f64 },

    #[error("incomplete Cholesky broke down after {restarts} shifted restarts")]
    FactorizationBreakdown { restarts: usize },

    #[error("{0}")]
    Numerical(String),

    #[error("bundle format error: {0}")]
    Format(String),

    #[error("parse error on line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
