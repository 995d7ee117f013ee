use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("grid mismatch: expected n={expected}, found n={found}")]
    GridMismatch { expected: usize, found: usize },

    #[error("time grid mismatch: {0}")]
    TimeGridMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("output directory {} already exists and is not empty", .0.display())]
    OutputExists(PathBuf),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("config parse error: {0}")]
    ConfigParse(#[from] toml::de::Error),

    #[error("config serialization error: {0}")]
    ConfigSerialize(#[from] toml::ser::Error),
}

impl Error {
    /// Stable short tag used in machine-readable diagnostics.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Config(_) | Error::ConfigParse(_) | Error::ConfigSerialize(_) => "config",
            Error::GridMismatch { .. } => "grid_mismatch",
            Error::TimeGridMismatch(_) => "time_grid_mismatch",
            Error::InvalidArgument(_) => "invalid_argument",
            Error::OutputExists(_) => "output_exists",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
        }
    }

    /// Errors caused by the user's input rather than by the run itself.
    pub fn is_usage_error(&self) -> bool {
        matches!(
            self,
            Error::Config(_)
                | Error::ConfigParse(_)
                | Error::InvalidArgument(_)
                | Error::OutputExists(_)
        )
    }
}

pub(crate) fn config_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
