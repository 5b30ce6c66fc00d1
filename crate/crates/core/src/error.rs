use std::io;

use thiserror::Error;

/// Errors produced anywhere in the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("low-confidence estimate: {0}")]
    LowConfidence(String),
    #[error("shape error: {0}")]
    Shape(String),
    #[error("invalid label {index} for {n_class} classes")]
    InvalidLabel { index: usize, n_class: usize },
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("invalid dataset: {0}")]
    InvalidDataset(String),
    #[error("empty trajectory")]
    EmptyTrajectory,
    #[error("incompatible artifacts: {0}")]
    Compatibility(String),
    #[error("unsupported format version {found} (expected {expected})")]
    Version { found: u16, expected: u16 },
    #[error("bad magic bytes: expected {expected:?}")]
    BadMagic { expected: &'static str },
    #[error("corrupt file: {0}")]
    Corrupt(String),
    #[error("checkpoint shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("serialization: {0}")]
    Serialization(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Coarse error categories, used by the command-line front end to pick exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Data,
    Compatibility,
    Io,
    Other,
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::InvalidParameter(_) | Error::InvalidConfig(_) | Error::Serialization(_) => {
                ErrorKind::Config
            }
            Error::InsufficientData(_)
            | Error::LowConfidence(_)
            | Error::InvalidInput(_)
            | Error::InvalidDataset(_)
            | Error::InvalidLabel { .. }
            | Error::EmptyTrajectory
            | Error::Version { .. }
            | Error::BadMagic { .. }
            | Error::Corrupt(_) => ErrorKind::Data,
            Error::Compatibility(_) | Error::ShapeMismatch(_) | Error::Shape(_) => {
                ErrorKind::Compatibility
            }
            Error::Io(_) => ErrorKind::Io,
        }
    }

    /// Process exit code for this error.
    pub fn exit_code(&self) -> i32 {
        match self.kind() {
            ErrorKind::Config => 2,
            ErrorKind::Data => 3,
            ErrorKind::Compatibility => 4,
            ErrorKind::Io => 5,
            ErrorKind::Other => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
