use std::path::Path;

use thiserror::Error;

pub type Result<T, E = CoreError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum CoreError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Write(#[from] std::io::Error),
    #[error("line {line}: {msg}")]
    Malformed { line: usize, msg: String },
    #[error("{}expected {expected} channel values, found {found}", line.map(|l| format!("line {l}: ")).unwrap_or_default())]
    Arity {
        line: Option<usize>,
        expected: usize,
        found: usize,
    },
    #[error("{path}: expected header `{expected}`, found `{found}`")]
    Header {
        path: String,
        expected: String,
        found: String,
    },
    #[error("invalid record: {0}")]
    InvalidRecord(String),
    #[error("{day}: missing {what}")]
    MissingInput { day: String, what: &'static str },
    #[error("{0}: empty day, no sensor streams")]
    EmptyDay(String),
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("expected {expected} values, found {found}")]
    WrongArity { expected: usize, found: usize },
    #[error("unmatched rows: {0}")]
    Unmatched(String),
    #[error("{0}")]
    Invalid(String),
}

impl CoreError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CoreError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}
