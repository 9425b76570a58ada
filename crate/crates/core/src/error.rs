use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{file}:{line}: {message}")]
    Parse {
        file: String,
        line: usize,
        message: String,
    },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("dimension mismatch in `{op}`: {detail}")]
    Dimension { op: &'static str, detail: String },

    #[error("domain error in `{op}`: {detail}")]
    Domain { op: &'static str, detail: String },

    #[error("contract violated: {0}")]
    Contract(String),

    #[error("training aborted at epoch {epoch}: {detail}")]
    Training { epoch: usize, detail: String },

    #[error("non-finite gradient for parameter `{0}`")]
    NonFiniteGradient(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("checkpoint checksum mismatch")]
    Checksum,

    #[error("unsupported checkpoint version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn parse(file: impl Into<String>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            file: file.into(),
            line,
            message: message.into(),
        }
    }

    pub(crate) fn dim(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Dimension {
            op,
            detail: detail.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by invalid user-supplied configuration or
    /// schema rather than by a runtime failure.
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config(_) | Error::Schema(_))
    }
}
