use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("point ({x}, {y}, {z}) lies outside the box [0, {box_len}]^3")]
    OutsideBox { x: f64, y: f64, z: f64, box_len: f64 },

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("unknown field `{0}`")]
    UnknownField(String),

    /// Bad magic, unsupported version or otherwise unparseable header.
    #[error("format error in {path}: {msg}")]
    Format { path: PathBuf, msg: String },

    /// The file ended before the announced content.
    #[error("corrupted file {path}: {msg}")]
    Corruption { path: PathBuf, msg: String },

    /// Records decode fine but do not describe a valid octree.
    #[error("structural error: {0}")]
    Structural(String),

    #[error("shape mismatch: expected {expected:?}, got {actual:?}")]
    ShapeMismatch {
        expected: (usize, usize),
        actual: (usize, usize),
    },

    #[error("work unit {unit} failed: {source}")]
    UnitFailed {
        unit: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        Error::Argument(msg.into())
    }
}
