use std::path::PathBuf;

use thiserror::Error;

/// Coarse error classes, mapped onto process exit codes by the CLI.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Config,
    Data,
    Numerical,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension error: {0}")]
    Dimension(String),
    #[error("parameter error: {0}")]
    Parameter(String),
    #[error("index {index} out of range for length {len}")]
    Index { index: usize, len: usize },
    #[error("degenerate vector: norm {norm:e} is below the cosine threshold")]
    DegenerateVector { norm: f64 },
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("non-finite value encountered in {0}")]
    NonFinite(String),
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("validation error: {0}")]
    Validation(String),
    #[error("split error: {0}")]
    Split(String),
    #[error("length error: need at least {needed} {unit}, got {got}")]
    Length {
        needed: usize,
        got: usize,
        unit: &'static str,
    },
    #[error("degenerate statistics: {0}")]
    DegenerateStatistics(String),
    #[error("numerical error: {0}")]
    Numerical(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("sampling error: user {user} has {available} candidate negatives, {requested} requested")]
    Sampling {
        user: usize,
        available: usize,
        requested: usize,
    },
    #[error("cold-start error: item {0} has no learned embedding")]
    ColdStart(usize),
    #[error("evaluation error: {0}")]
    Evaluation(String),
    #[error("missing audio for item {0}")]
    MissingAudio(String),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error("wav error in {path}: {msg}")]
    Wav { path: PathBuf, msg: String },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Config(_) | Error::Parameter(_) | Error::Contract(_) => ErrorClass::Config,
            Error::DegenerateVector { .. }
            | Error::NonFinite(_)
            | Error::Numerical(_)
            | Error::DegenerateStatistics(_) => ErrorClass::Numerical,
            _ => ErrorClass::Data,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
