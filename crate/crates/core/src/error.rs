use thiserror::Error;

#[derive(Debug, Error)]
pub enum DecoqError {
    #[error("not hermitian: {0}")]
    NotHermitian(String),
    #[error("not unitary: {0}")]
    NotUnitary(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("non-finite entries in {0}")]
    NonFinite(String),
    #[error("invalid specification: {0}")]
    InvalidSpec(String),
    #[error("not a decoupling set: {0}")]
    NotDecoupling(String),
    #[error("budget exceeded: {what} needs dimension {size}, limit {limit}")]
    Budget { what: String, size: usize, limit: usize },
    #[error("insufficient tau coverage: {0}")]
    InsufficientTau(String),
}

pub type Result<T> = std::result::Result<T, DecoqError>;
