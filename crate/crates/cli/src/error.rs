use std::path::PathBuf;

use edgefs_core::{FrameIoError, PipelineError};
use edgefs_sim::SimError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("i/o error on {0}: {1}")]
    Io(PathBuf, #[source] std::io::Error),
    #[error("{0}")]
    Data(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Io(..) => 3,
            CliError::Data(_) => 4,
        }
    }

    pub fn io(path: impl Into<PathBuf>, e: std::io::Error) -> Self {
        CliError::Io(path.into(), e)
    }
}

impl From<FrameIoError> for CliError {
    fn from(e: FrameIoError) -> Self {
        match e {
            FrameIoError::Io { path, source } => CliError::Io(path, source),
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::UnknownPreset(_) | SimError::UnknownMotion(_) | SimError::InvalidConfig(_) => {
                CliError::Usage(e.to_string())
            }
            SimError::Io(path, source) => CliError::Io(path, source),
            SimError::Frame(f) => f.into(),
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        match e.into_kind() {
            csv::ErrorKind::Io(io) => CliError::Io(PathBuf::from("<csv>"), io),
            kind => CliError::Data(format!("csv: {kind:?}")),
        }
    }
}
