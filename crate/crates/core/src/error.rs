use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("non-finite value at index {index}")]
    NonFinite { index: usize },

    #[error("matrix is not symmetric (max asymmetry {asymmetry:e})")]
    NotSymmetric { asymmetry: f64 },

    #[error("factorization failed: {0}")]
    Factorization(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("channel index {index} out of range for {channels} channels")]
    ChannelOutOfRange { index: usize, channels: usize },

    #[error("backend cannot answer: {0}")]
    MissingCapability(String),

    #[error("invalid model spec: {0}")]
    ModelSpec(String),

    #[error("bad magic in tensor file (found {found:?})")]
    BadMagic { found: [u8; 4] },

    #[error("unsupported tensor dtype code {0}")]
    UnsupportedDtype(u8),

    #[error("tensor file length mismatch: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },

    #[error("malformed record: {0}")]
    Record(String),

    #[error("base score is zero for item {index}; average drop is undefined")]
    ZeroBaseScore { index: usize },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("image encoding failed: {0}")]
    Image(#[from] image::ImageError),
}

impl Error {
    pub(crate) fn dims(msg: impl Into<String>) -> Self {
        Error::DimensionMismatch(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by reading or writing files, including
    /// malformed file contents.
    pub fn is_io(&self) -> bool {
        matches!(
            self,
            Error::Io { .. }
                | Error::Json { .. }
                | Error::BadMagic { .. }
                | Error::UnsupportedDtype(_)
                | Error::Truncated { .. }
                | Error::Record(_)
                | Error::Image(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
