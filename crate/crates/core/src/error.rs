use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Shape of a matrix as `(rows, cols)`.
pub type Shape = (usize, usize);

#[derive(Debug, Error)]
pub enum Error {
    #[error("{op}: shape mismatch between {left:?} and {right:?}")]
    Shape {
        op: &'static str,
        left: Shape,
        right: Shape,
    },

    #[error("{0}: non-finite value")]
    NonFinite(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("numeric failure at epoch {epoch}: {message}")]
    Numeric { epoch: usize, message: String },

    #[error("{0}: zero-norm vector")]
    ZeroNorm(String),

    #[error("format error at byte {offset}: {message}")]
    Format { offset: usize, message: String },

    #[error("model error: {0}")]
    Model(String),

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("unknown id `{0}`")]
    Lookup(String),

    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn shape(op: &'static str, left: Shape, right: Shape) -> Self {
        Error::Shape { op, left, right }
    }

    pub(crate) fn file(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::File {
            path: path.into(),
            source,
        }
    }
}
