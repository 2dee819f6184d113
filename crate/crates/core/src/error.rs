use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Operand shapes are incompatible for the requested operation.
    #[error("dimension error: {0}")]
    Dimension(String),

    /// Invalid configuration value (rates, grids, widths, ...).
    #[error("configuration error: {0}")]
    Config(String),

    /// A caller violated an API contract, e.g. backward on a non-scalar.
    #[error("contract error: {0}")]
    Contract(String),

    #[error("simulation diverged at step {step} (t = {time:.4} s): |state| = {magnitude:e}")]
    Simulation {
        step: usize,
        time: f64,
        magnitude: f64,
    },

    #[error("training error: {0}")]
    Training(String),

    /// Malformed or incompatible checkpoint / dataset file.
    #[error("format error in {field}: {reason}")]
    Format { field: String, reason: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn dim(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn format(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Format {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code: 2 for invalid input or configuration, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Dimension(_) | Error::Config(_) | Error::Format { .. } | Error::Json(_) => 2,
            Error::Io { source, .. } if source.kind() == std::io::ErrorKind::NotFound => 2,
            _ => 1,
        }
    }
}
