use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("transmission {value} below floor {floor} at index {index}")]
    DegenerateTransmission { value: f64, floor: f64, index: usize },

    #[error("image {height}x{width} smaller than patch size {size}")]
    TooSmall { height: usize, width: usize, size: usize },

    #[error("format error: {0}")]
    Format(String),

    #[error("incompatible backbone: expected {expected}, found {found}")]
    Incompatible { expected: String, found: String },

    #[error("corrupted data: {0}")]
    Corruption(String),

    #[error("unsupported version {found} (expected {expected})")]
    Version { found: u8, expected: u8 },

    #[error("curves do not overlap: {0}")]
    Overlap(String),

    #[error("configuration error: {0}")]
    Configuration(String),

    #[error("codec integrity failure: {0}")]
    CodecIntegrity(String),

    #[error("non-finite loss at step {step}: {diagnostics}")]
    NonFiniteLoss { step: usize, diagnostics: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Image(#[from] image::ImageError),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
