use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SwiptError {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("degenerate weights: {0}")]
    DegenerateWeights(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("oracle self-inconsistency: {0}")]
    OracleInconsistent(String),

    #[error("undefined: {0}")]
    Undefined(String),
}

pub type Result<T> = std::result::Result<T, SwiptError>;
