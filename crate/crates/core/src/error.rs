use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("invalid interval at index {index}: lower {lower} > upper {upper}")]
    InvalidInterval { index: usize, lower: f64, upper: f64 },

    #[error("negative range {value} at index {index}")]
    NegativeRange { index: usize, value: f64 },

    #[error("coefficient {value} at index {index} outside [0, 1]")]
    CoefficientOutOfBox { index: usize, value: f64 },

    #[error("series of length {len} too short: embedding leaves {trajectories} trajectories, need at least 2")]
    SeriesTooShort { len: usize, trajectories: i64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("backward called without a forward cache")]
    MissingCache,

    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("malformed row {row}: {message}")]
    MalformedRow { row: usize, message: String },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Stable variant name, used in machine-readable error output.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::LengthMismatch { .. } => "LengthMismatch",
            Error::InvalidInterval { .. } => "InvalidInterval",
            Error::NegativeRange { .. } => "NegativeRange",
            Error::CoefficientOutOfBox { .. } => "CoefficientOutOfBox",
            Error::SeriesTooShort { .. } => "SeriesTooShort",
            Error::DimMismatch { .. } => "DimMismatch",
            Error::ShapeMismatch(_) => "ShapeMismatch",
            Error::MissingCache => "MissingCache",
            Error::LabelOutOfRange { .. } => "LabelOutOfRange",
            Error::NonFinite(_) => "NonFinite",
            Error::InvalidConfig(_) => "InvalidConfig",
            Error::MalformedRow { .. } => "MalformedRow",
            Error::Checkpoint(_) => "Checkpoint",
            Error::Io { .. } => "Io",
            Error::Csv(_) => "Csv",
            Error::Json(_) => "Json",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
