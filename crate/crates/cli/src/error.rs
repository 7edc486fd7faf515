use std::path::PathBuf;

use cqed_core::Error as CoreError;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Core(#[from] CoreError),

    #[error("cannot access {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("output error: {0}")]
    Output(String),
}

pub type Result<T> = std::result::Result<T, CliError>;

impl CliError {
    /// 0 success, 2 config error, 3 numerical or calibration failure,
    /// 4 unsatisfiable gate condition, 1 anything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Core(CoreError::InvalidArgument(_) | CoreError::Unsupported(_)) => 2,
            CliError::Core(CoreError::Unsatisfiable { .. }) => 4,
            CliError::Core(_) => 3,
            CliError::Io { .. } | CliError::Output(_) => 1,
        }
    }
}

pub(crate) fn config_err(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Output(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Output(e.to_string())
    }
}
