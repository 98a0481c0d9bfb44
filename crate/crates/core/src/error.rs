use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error("invalid header sidecar: {0}")]
    Sidecar(String),

    #[error("invalid cube header: {0}")]
    InvalidHeader(String),

    #[error("file size mismatch: header implies {expected} bytes, file has {actual}")]
    FileSize { expected: u64, actual: u64 },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("non-finite sample at index {0}")]
    NonFinite(usize),

    #[error("cube carries no normalization parameters")]
    MissingNorm,

    #[error("cube is not normalized to [0, 1]")]
    NotNormalized,

    #[error("invalid network configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid settings: {0}")]
    InvalidSettings(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("batch size mismatch: {coords} coordinates vs {targets} targets")]
    BatchSize { coords: usize, targets: usize },

    #[error("unsupported bit width {0} (expected 32, 16 or 8)")]
    BitWidth(u32),

    #[error("non-finite parameter in layer {layer}")]
    NonFiniteParam { layer: usize },

    #[error("bad magic bytes {0:02x?}")]
    BadMagic([u8; 4]),

    #[error("unsupported bitstream version {0}")]
    Version(u8),

    #[error("truncated bitstream: expected {expected} bytes, got {actual}")]
    Truncated { expected: usize, actual: usize },

    #[error("payload length mismatch: expected {expected} bytes, got {actual}")]
    PayloadLength { expected: usize, actual: usize },

    #[error("malformed bitstream: {0}")]
    Format(String),

    #[error("no architecture fits the budget of {max_params} parameters")]
    NoCandidates { max_params: u64 },

    #[error("invalid budget: {0}")]
    Budget(String),

    #[error("negative mse {0}")]
    NegativeMse(f64),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

/// Coarse classification used by front ends to pick exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Io,
    Format,
    Validation,
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Io { .. } | Error::Csv(_) => ErrorClass::Io,
            Error::Sidecar(_)
            | Error::FileSize { .. }
            | Error::BadMagic(_)
            | Error::Version(_)
            | Error::Truncated { .. }
            | Error::PayloadLength { .. }
            | Error::Format(_) => ErrorClass::Format,
            _ => ErrorClass::Validation,
        }
    }
}
