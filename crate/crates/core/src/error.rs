use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("shape mismatch: expected {expected}, got {actual}")]
    ShapeMismatch { expected: String, actual: String },

    #[error("label id {id} is outside the {classes}-class legend")]
    LabelOutOfRange { id: u8, classes: usize },

    #[error("band {band} has zero standard deviation")]
    ZeroStddev { band: usize },

    #[error("band {band} contains no valid (non-nodata) pixels")]
    EmptyBand { band: usize },

    #[error("{count} output pixels are not covered by any tile")]
    Coverage { count: usize },

    #[error("missing expert map for flagged class {0}")]
    MissingExpert(u8),

    #[error("all-zero confusion matrix")]
    EmptyMatrix,

    #[error("bad magic bytes: expected FMLCRAS1")]
    BadMagic,

    #[error("malformed tensor header: {0}")]
    MalformedHeader(String),

    #[error("truncated {what}: expected {expected} bytes, found {actual}")]
    Truncated {
        what: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("payload checksum mismatch: stored {stored:#010x}, computed {computed:#010x}")]
    ChecksumMismatch { stored: u32, computed: u32 },

    #[error("{0} trailing bytes after checksum")]
    TrailingData(usize),

    #[error("malformed TIFF: {0}")]
    MalformedTiff(String),

    #[error("unsupported TIFF feature: {0}")]
    UnsupportedTiff(String),

    #[error("legend of {0} classes does not fit an 8-bit label raster")]
    Capacity(usize),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
