use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the evaluation pipeline.
///
/// Variants fall into four groups (parameter, parse, data, I/O) that the
/// command-line front end maps onto distinct exit codes.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("{context}: line {line}, column {column}: {message}")]
    Parse {
        context: String,
        line: usize,
        column: usize,
        message: String,
    },

    #[error("{0}")]
    Data(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("aborted after writing {written} of {total} images: {source}")]
    Aborted {
        written: usize,
        total: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },
}

/// Coarse classification used for exit codes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ErrorClass {
    Usage,
    Data,
    Io,
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }

    pub fn param(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    pub fn class(&self) -> ErrorClass {
        match self {
            Error::InvalidParameter(_) => ErrorClass::Usage,
            Error::Parse { .. } | Error::Data(_) => ErrorClass::Data,
            Error::Io { .. } => ErrorClass::Io,
            Error::Aborted { source, .. } => source.class(),
            Error::Image { source, .. } => match source {
                image::ImageError::IoError(_) => ErrorClass::Io,
                _ => ErrorClass::Data,
            },
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
