use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("non-finite value at index {index}")]
    NonFinite { index: usize },

    #[error("ill-conditioned system (condition estimate {condition:.3e}){}", slot.map(|s| format!(" while fitting slot {s}")).unwrap_or_default())]
    IllConditioned { condition: f64, slot: Option<usize> },

    #[error("not found: {0}")]
    NotFound(String),

    #[error("conflict: {0}")]
    Conflict(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error("image: {0}")]
    Image(#[from] image::ImageError),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub fn format(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Format { path: path.into(), message: message.into() }
    }

    /// Process exit code used by the command line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Invalid(_) | Error::NonFinite { .. } | Error::NotFound(_) | Error::Conflict(_) => 2,
            Error::Io { .. } | Error::Format { .. } | Error::Image(_) => 3,
            Error::IllConditioned { .. } => 4,
        }
    }

    /// Short machine-readable reason tag.
    pub fn reason(&self) -> &'static str {
        match self {
            Error::Invalid(_) => "invalid",
            Error::NonFinite { .. } => "non_finite",
            Error::IllConditioned { .. } => "ill_conditioned",
            Error::NotFound(_) => "not_found",
            Error::Conflict(_) => "conflict",
            Error::Io { .. } => "io",
            Error::Format { .. } => "format",
            Error::Image(_) => "image",
        }
    }
}
