use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Invalid argument where two images (or an image and a field) disagree in shape.
    #[error("invalid argument: dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// A scene or request document violates its schema at `path`
    /// (dotted, kebab-case field names, e.g. `camera.vertical-fov`).
    #[error("invalid argument: {path}: {message}")]
    Validation { path: String, message: String },

    /// Structural problem in a binary file, located at `offset` bytes.
    #[error("format error at byte {offset}: {message}")]
    Format { offset: u64, message: String },

    /// Well-formed file whose contents violate an invariant.
    #[error("data error: {0}")]
    Data(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error("image codec: {0}")]
    Codec(#[from] image::ImageError),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn mismatch(msg: impl Into<String>) -> Self {
        Error::DimensionMismatch(msg.into())
    }
}
