use std::path::PathBuf;

use thiserror::Error;

pub type CliResult<T> = Result<T, CliError>;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error("solver: {0}")]
    Solver(alrom::Error),
    #[error("{path}: {reason}")]
    Corrupt { path: PathBuf, reason: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Core(alrom::Error),
}

impl CliError {
    /// Process exit status: 2 configuration, 3 nonconvergence, 4 I/O or
    /// corrupt artifact, 1 anything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Solver(_) => 3,
            CliError::Corrupt { .. } | CliError::Io { .. } => 4,
            CliError::Core(_) => 1,
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io { path: path.into(), source }
    }

    pub fn corrupt(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        CliError::Corrupt { path: path.into(), reason: reason.into() }
    }
}

impl From<alrom::Error> for CliError {
    fn from(e: alrom::Error) -> Self {
        match e {
            alrom::Error::NonConvergence { .. } => CliError::Solver(e),
            alrom::Error::InvalidConfig(msg) => CliError::Config(msg),
            other => CliError::Core(other),
        }
    }
}
