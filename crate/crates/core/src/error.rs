use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("observable is empty")]
    EmptyObservable,

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("{qubits} qubits exceeds the dense limit of {limit}")]
    TooLarge { qubits: usize, limit: usize },

    #[error("invalid qubit subset: {0}")]
    InvalidSubset(String),

    #[error("matrix is not unitary (deviation {0:e})")]
    NotUnitary(f64),

    #[error("POVM is not informationally complete (Gram condition {0:e})")]
    InformationallyIncomplete(f64),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("zero-norm intermediate state during sampling")]
    ZeroNorm,

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("degenerate fit input: {0}")]
    Degenerate(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
