use std::path::PathBuf;

use thiserror::Error;

use crate::dataset::EmotionLabel;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("class {0} has no samples")]
    EmptyClass(EmotionLabel),

    #[error("requested {requested} samples per class but {label} only has {available}")]
    InsufficientSamples {
        label: EmotionLabel,
        requested: usize,
        available: usize,
    },

    #[error("split leaves class {label} with {train} train / {val} validation samples")]
    DegenerateSplit {
        label: EmotionLabel,
        train: usize,
        val: usize,
    },

    #[error("format error in {path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error("unknown label {label:?} in {path}")]
    UnknownLabel { path: PathBuf, label: String },

    #[error("expected {expected} channel(s), got {actual}")]
    ChannelsMismatch { expected: usize, actual: usize },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: String, actual: String },

    #[error("value range error: {0}")]
    Range(String),

    #[error("shape mismatch:\n{}", .0.join("\n"))]
    ShapeMismatch(Vec<String>),

    #[error("missing parameter(s): {}", .0.join(", "))]
    MissingParameter(Vec<String>),

    #[error("target {target} out of range for {classes} classes")]
    InvalidTarget { target: usize, classes: usize },

    #[error("invalid gradient accumulation: {0}")]
    InvalidAccumulation(String),

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("no samples to evaluate")]
    EmptyEvaluation,

    #[error("training diverged at epoch {epoch}: probe loss {loss}")]
    Diverged { epoch: usize, loss: f64 },

    #[error("config error at `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("image decode error for {path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },

    #[error("weight archive error: {0}")]
    Archive(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn format(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            message: message.into(),
        }
    }

    pub(crate) fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            message: message.into(),
        }
    }

    /// Process exit code: 2 for configuration problems, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config { .. } => 2,
            _ => 1,
        }
    }
}
