use thiserror::Error;

use crate::types::Violation;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid instance: {0}")]
    InvalidInstance(String),
    #[error("agent index {index} out of range for {n} agents")]
    AgentOutOfRange { index: usize, n: usize },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("infeasible allocation: {0}")]
    Infeasible(Violation),
    #[error("instance too large to enumerate: n = {n} exceeds {limit}")]
    TooLarge { n: usize, limit: usize },
    #[error("malformed permutation: {0}")]
    MalformedPermutation(String),
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("footfall line {line}: {message}")]
    Footfall { line: usize, message: String },
    #[error("invalid config: {0}")]
    Config(String),
}
