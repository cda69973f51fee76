use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by every stage of the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("file not found: {0}")]
    FileNotFound(PathBuf),
    #[error("unsupported image format: {0}")]
    UnsupportedFormat(String),
    #[error("corrupt image data: {0}")]
    CorruptData(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("image too small: {width}x{height}, need at least {min_side} px per side")]
    ImageTooSmall {
        width: usize,
        height: usize,
        min_side: usize,
    },
    #[error("no pupil found (best bin {votes} votes, need {required})")]
    NoPupilFound { votes: usize, required: usize },
    #[error("no iris found (best bin {votes} votes, need {required})")]
    NoIrisFound { votes: usize, required: usize },
    #[error("insufficient valid coverage in normalized iris: {coverage:.3}")]
    InsufficientCoverage { coverage: f64 },
    #[error("empty input")]
    EmptyInput,
    #[error("no valid pixel pairs for texture matrix")]
    NoValidPairs,
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("numerical divergence at epoch {epoch}: loss is not finite")]
    NumericalDivergence { epoch: usize },
    #[error("class {0} has no positive or no negative samples")]
    DegenerateClass(usize),
    #[error("too few samples: {got}, need at least {need}")]
    TooFewSamples { got: usize, need: usize },
    #[error("dataset is empty: {0}")]
    EmptyDataset(String),
    #[error("bundle version mismatch: found {found}, expected {expected}")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("corrupt bundle: {0}")]
    CorruptBundle(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

/// Coarse failure class, used for process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Data,
    Numerical,
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::InvalidParameter(_) | Error::Config(_) => ErrorKind::Config,
            Error::NumericalDivergence { .. } => ErrorKind::Numerical,
            _ => ErrorKind::Data,
        }
    }
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
