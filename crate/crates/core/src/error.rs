use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors raised by the library. Each message carries the name of the
/// component that produced it so that the CLI can surface it verbatim.
#[derive(Debug, Error)]
pub enum Error {
    #[error("vocab: empty corpus")]
    EmptyCorpus,

    #[error("vocab: token id {id} out of range for vocabulary of size {size}")]
    IdOutOfRange { id: usize, size: usize },

    #[error("schedule: noise level {0} outside [0, 1]")]
    LevelOutOfRange(f64),

    #[error("schedule: posterior requires s < t (got s = {s}, t = {t})")]
    NonIncreasingLevels { s: f64, t: f64 },

    #[error("denoiser: no replay entry for t = {t} ids = {ids:?}")]
    NoReplayEntry { t: String, ids: Vec<usize> },

    #[error("denoiser: vocabulary size mismatch (expected {expected}, found {found})")]
    VocabMismatch { expected: usize, found: usize },

    #[error("denoiser: mask token at position {0} is not valid for a uniform-state sequence")]
    MaskInUniformState(usize),

    #[error("rescorer: enumeration too large ({0})")]
    EnumerationTooLarge(String),

    #[error("{module}: {message}")]
    Invalid { module: &'static str, message: String },

    #[error("{path}: line {line}: {message}")]
    Format {
        path: String,
        line: usize,
        message: String,
    },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error on {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub(crate) fn invalid(module: &'static str, message: impl Into<String>) -> Self {
        Error::Invalid {
            module,
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<String>, line: usize, message: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            line,
            message: message.into(),
        }
    }
}
