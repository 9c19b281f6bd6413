use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A configuration value violates a precondition (bad sizes, zero fan-in, ...).
    #[error("configuration error: {0}")]
    Config(String),

    #[error("shape mismatch in {layer}: expected {expected}, got {got}")]
    Shape {
        layer: String,
        expected: String,
        got: String,
    },

    /// An API was called out of order, e.g. backward before a training forward.
    #[error("usage error: {0}")]
    Usage(String),

    #[error("empty input: {0}")]
    Empty(String),

    /// A quantity has no defined value (e.g. percentage of zero parameters).
    #[error("undefined: {0}")]
    Undefined(String),

    #[error("{file}: malformed data at byte offset {offset}: {message}")]
    Format {
        file: PathBuf,
        offset: u64,
        message: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("serialization error: {0}")]
    Serde(String),
}

impl Error {
    pub(crate) fn shape(
        layer: impl Into<String>,
        expected: impl std::fmt::Debug,
        got: impl std::fmt::Debug,
    ) -> Self {
        Error::Shape {
            layer: layer.into(),
            expected: format!("{expected:?}"),
            got: format!("{got:?}"),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
