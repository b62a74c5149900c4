use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Error, Debug)]
pub enum Error {
    #[error("file not found: {0}")]
    MissingFile(PathBuf),
    #[error("unsupported audio format in {path}: {detail}")]
    UnsupportedFormat { path: PathBuf, detail: String },
    #[error("truncated or malformed chunk in {path}: {detail}")]
    Truncated { path: PathBuf, detail: String },
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("non-finite sample value")]
    NonFinite,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("signal too short: {len} samples, need at least {needed}")]
    TooShort { len: usize, needed: usize },
    #[error("matrix not positive definite")]
    NotPositiveDefinite,
    #[error("singular system at frequency bin {bin}")]
    Singular { bin: usize },
    #[error("manifest {field}: {message}")]
    Manifest { field: String, message: String },
    #[error("unknown utterance id {0:?}")]
    UnknownUtterance(String),
    #[error("target speaker {0:?} is never active in the core region")]
    TargetInactive(String),
    #[error("silent signal: {0}")]
    Silent(&'static str),
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("segment {utt_id}: {source}")]
    Segment {
        utt_id: String,
        #[source]
        source: Box<Error>,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::ShapeMismatch(msg.into())
    }
}
