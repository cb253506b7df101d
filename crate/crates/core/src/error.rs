use std::path::PathBuf;

use thiserror::Error;

/// Errors raised across the engine.
#[derive(Debug, Error)]
pub enum RseError {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("degenerate vector: {0}")]
    DegenerateVector(String),

    #[error("arity error: {0}")]
    Arity(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("empty sentence")]
    EmptySentence,

    #[error("token id {id} out of range for vocabulary of size {size}")]
    Vocabulary { id: u32, size: usize },

    #[error("state error: {0}")]
    State(String),

    #[error("unknown relation id {0}")]
    Lookup(usize),

    #[error("schema error: {0}")]
    Schema(String),

    #[error("batch size error: {0}")]
    BatchSize(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("no negative available: {0}")]
    NoNegativeAvailable(String),

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("corrupt artifact: {0}")]
    CorruptArtifact(String),

    #[error("dev evaluation failed at step {step}: {msg}")]
    DevEval { step: usize, msg: String },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl RseError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        RseError::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, RseError>;
