use std::path::PathBuf;

use thiserror::Error;

use crate::config::ConfigError;
use crate::fetch::FetchError;

/// Failure of a command, carrying its process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("training diverged: {0}")]
    Diverged(String),
    #[error("cannot load {path}: {source}")]
    Checkpoint {
        path: PathBuf,
        source: prunenet::Error,
    },
    #[error("bad dataset: {0}")]
    Data(String),
    #[error(transparent)]
    Fetch(#[from] FetchError),
    #[error("cannot write {path}: {msg}")]
    Output { path: PathBuf, msg: String },
    #[error("imported model differs from the reference: {0}")]
    Mismatch(String),
    #[error("{0}")]
    Internal(prunenet::Error),
}

impl CliError {
    /// 2 configuration, 3 divergence, 4 unreadable checkpoint, 5 dataset or
    /// download, 6 output, 7 roundtrip mismatch, 1 anything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Diverged(_) => 3,
            CliError::Checkpoint { .. } => 4,
            CliError::Data(_) | CliError::Fetch(_) => 5,
            CliError::Output { .. } => 6,
            CliError::Mismatch(_) => 7,
            CliError::Internal(_) => 1,
        }
    }
}

impl From<prunenet::Error> for CliError {
    fn from(e: prunenet::Error) -> Self {
        match e {
            prunenet::Error::Diverged(msg) => CliError::Diverged(msg),
            other => CliError::Internal(other),
        }
    }
}
