use std::path::PathBuf;

/// Errors produced by the toolkit.
///
/// Everything except [`Error::Io`] is a problem with the caller's input and
/// maps to a usage/validation failure at the command line.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("malformed npy container: {0}")]
    Format(String),

    #[error("unsupported format: {0}")]
    UnsupportedFormat(String),

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("size bound exceeded: {0}")]
    Bound(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("malformed json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io { .. })
    }
}

pub type Result<T> = std::result::Result<T, Error>;
