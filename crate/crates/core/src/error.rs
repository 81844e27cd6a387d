use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = FppError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum FppError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected:?}, found {found:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        found: (usize, usize),
    },

    #[error("index out of range: {0}")]
    OutOfRange(String),

    #[error("degenerate geometry at pixel ({u}, {v}), z = {z}: inversion denominator vanishes")]
    DegenerateGeometry { u: f64, v: f64, z: f64 },

    #[error("degenerate calibration (condition estimate {condition:e}): {reason}")]
    DegenerateCalibration { condition: f64, reason: String },

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("singular denominator at pixel ({u}, {v})")]
    SingularDenominator { u: usize, v: usize },

    #[error("no jointly valid pixels")]
    EmptyIntersection,

    #[error("format error in {}: {msg}", path.display())]
    Format { path: PathBuf, msg: String },

    #[error("sample '{id}': missing file {}", path.display())]
    MissingFile { id: String, path: PathBuf },

    #[error("duplicate sample id '{0}'")]
    DuplicateId(String),

    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error in {}: {source}", path.display())]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

impl FppError {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        FppError::InvalidArgument(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        FppError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, msg: impl Into<String>) -> Self {
        FppError::Format {
            path: path.into(),
            msg: msg.into(),
        }
    }
}
