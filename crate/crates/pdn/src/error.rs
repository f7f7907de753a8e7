use std::path::PathBuf;
use thiserror::Error;

/// Crate-wide error type. Every variant maps to a fixed CLI exit code,
/// see [`Error::exit_code`].
#[derive(Debug, Error)]
pub enum Error {
    /// An argument violated a mathematical or physical precondition.
    #[error("domain error: {0}")]
    Domain(String),

    /// Bad flags, malformed user-supplied text, unknown names.
    #[error("{0}")]
    Usage(String),

    /// A request would exceed the configured resource guard.
    #[error("capacity guard: {0}")]
    Capacity(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// A binary or CSV artifact failed to parse.
    #[error("format error in {path} at byte {offset}: {message}")]
    Format {
        path: PathBuf,
        offset: u64,
        message: String,
    },

    /// Training diverged or produced non-finite values.
    #[error("training error ({context}): {message}")]
    Training { context: String, message: String },

    /// Inputs are individually valid but cannot be combined.
    #[error("incompatible inputs: {0}")]
    Incompatible(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Exit-code table: 0 ok, 2 usage, 3 capacity, 4 i/o, 5 training,
    /// 6 incompatibility.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Domain(_) | Error::Usage(_) => 2,
            Error::Capacity(_) => 3,
            Error::Io { .. } | Error::Format { .. } => 4,
            Error::Training { .. } => 5,
            Error::Incompatible(_) => 6,
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn format(path: impl Into<PathBuf>, offset: u64, message: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            offset,
            message: message.into(),
        }
    }
}
