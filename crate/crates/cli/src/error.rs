use std::path::PathBuf;
use std::process::ExitCode;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad scenario, parameters or input files.
    #[error("{0}")]
    Config(semmap::Error),

    /// Something failed while simulating or writing results.
    #[error("{0}")]
    Runtime(semmap::Error),

    #[error("missing artifact {}: run `semmap {producer}` first", path.display())]
    MissingArtifact { path: PathBuf, producer: &'static str },

    #[error("{0}")]
    Usage(String),

    #[error("{context}: {source}")]
    Output {
        context: String,
        #[source]
        source: Box<dyn std::error::Error + Send + Sync>,
    },
}

impl CliError {
    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(match self {
            CliError::Config(_) | CliError::Usage(_) => 2,
            CliError::Runtime(_) | CliError::Output { .. } => 3,
            CliError::MissingArtifact { .. } => 4,
        })
    }
}

impl From<semmap::Error> for CliError {
    fn from(e: semmap::Error) -> Self {
        if e.is_config_error() {
            CliError::Config(e)
        } else {
            CliError::Runtime(e)
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
