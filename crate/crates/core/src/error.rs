use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("empty signal")]
    EmptySignal,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("length {0} is not a power of two")]
    NotPowerOfTwo(usize),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("unsupported wav {path}: {reason}")]
    UnsupportedWav { path: PathBuf, reason: String },

    #[error("metadata error for note {note_id}: {reason}")]
    Metadata { note_id: String, reason: String },

    #[error("per_class {requested} exceeds the {available} records available for class {class} ({name})")]
    InsufficientClass {
        requested: usize,
        available: usize,
        class: u8,
        name: &'static str,
    },

    #[error("{failed} of {total} files failed during {stage}; first failure: {first}")]
    TooManyFailures {
        stage: &'static str,
        failed: usize,
        total: usize,
        first: String,
    },

    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("training failed: {0}")]
    Training(String),

    /// The solver hit its iteration cap; `partial` is usable but not optimal.
    #[error("SVM did not converge within {iterations} sweeps")]
    SvmNotConverged {
        iterations: usize,
        partial: Box<crate::classical::SvmModel>,
    },

    #[error("non-finite loss at epoch {epoch}, batch {batch}; first non-finite output: {layer}")]
    NonFinite { epoch: usize, batch: usize, layer: String },

    #[error("model format: {0}")]
    ModelFormat(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Image(#[from] image::ImageError),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
