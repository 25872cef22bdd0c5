//! File formats, the remote LLM client, the live session service and the
//! command line around `fastslow-core`.

pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod episode_log;
pub mod exec;
pub mod manifest;
pub mod memory_file;
pub mod remote;
pub mod serve;
pub mod wire;

use std::path::PathBuf;

use fastslow_core::sim::SimError;
use fastslow_core::trainer::TrainError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("config: {0}")]
    Config(String),
    #[error("bad checkpoint: {0}")]
    BadCheckpoint(String),
    #[error("bad episode log: {0}")]
    BadLog(String),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("{0}")]
    Serve(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// Process exit status for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::BadCheckpoint(_) | Error::BadLog(_) => 2,
            Error::Train(TrainError::InvalidConfig(_)) | Error::Sim(SimError::InvalidConfig(_)) => 2,
            _ => 1,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
