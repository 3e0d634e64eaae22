use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("unknown label {0}")]
    UnknownLabel(usize),

    #[error("invalid network: {0}")]
    InvalidNetwork(String),

    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("inverted bounds [{lo}, {hi}]")]
    InvertedBounds { lo: f64, hi: f64 },

    #[error("unknown variable {0}")]
    UnknownVar(usize),

    #[error("input point has no unique label")]
    NoUniqueLabel,

    #[error("invalid property: {0}")]
    InvalidProperty(String),

    #[error("cannot partition: {0}")]
    Partition(String),

    #[error("solver limit: {0}")]
    SolverLimit(String),
}
