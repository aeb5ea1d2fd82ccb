use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    Parameter { name: &'static str, reason: String },

    #[error("degenerate signal: {0}")]
    Degenerate(String),

    #[error("`{name}` = {value} is outside the valid range: {reason}")]
    Range {
        name: &'static str,
        value: f64,
        reason: String,
    },

    #[error("format error in `{field}`: {reason}")]
    Format { field: String, reason: String },

    #[error("training failed: {0}")]
    Training(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Short machine-readable category.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Parameter { .. } => "parameter",
            Error::Degenerate(_) => "degenerate",
            Error::Range { .. } => "range",
            Error::Format { .. } => "format",
            Error::Training(_) => "training",
            Error::Io { .. } => "io",
        }
    }

    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::Parameter {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn range(name: &'static str, value: f64, reason: impl Into<String>) -> Self {
        Error::Range {
            name,
            value,
            reason: reason.into(),
        }
    }

    pub(crate) fn format(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Format {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
