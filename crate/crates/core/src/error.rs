use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("division by zero")]
    DivisionByZero,
    #[error("parse error: {0}")]
    Parse(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("word is not admissible: {0}")]
    NotAdmissible(String),
    #[error("matrix is reducible")]
    Reducible,
    #[error("matrix is periodic")]
    Periodic,
    #[error("needs higher precision: {0}")]
    NeedsHigherPrecision(String),
    #[error("infeasible: {0}")]
    Infeasible(String),
    #[error("out of range: {0}")]
    OutOfRange(String),
    #[error("point is a cylinder endpoint: {0}")]
    Endpoint(String),
    #[error("certificate failed: {0}")]
    Certificate(String),
}

pub type Result<T> = std::result::Result<T, Error>;
