use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(
        "dimension mismatch: expected {expected_width}x{expected_height}, got {width}x{height}"
    )]
    DimensionMismatch {
        expected_width: usize,
        expected_height: usize,
        width: usize,
        height: usize,
    },

    #[error("non-finite intensity {value} at pixel ({x}, {y})")]
    NonFinite { x: usize, y: usize, value: f64 },

    #[error("label {0} is outside the alphabet {{0, 1, 2, 3}}")]
    InvalidLabel(i64),

    #[error("not a NIfTI-1 file: {0}")]
    NotNifti(String),

    #[error("unsupported NIfTI datatype code {0}")]
    UnsupportedDatatype(i16),

    #[error("voxel data length mismatch: expected {expected} bytes, found {found}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("missing {what}: {path}")]
    MissingComponent { what: String, path: PathBuf },

    #[error("metadata error: {0}")]
    Metadata(String),

    #[error("PNG encoding failed: {0}")]
    Png(#[from] png::EncodingError),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
