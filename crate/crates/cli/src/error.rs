use std::path::{Path, PathBuf};

use smartbullets::classifier::ModelError;
use smartbullets::corpus::CorpusError;
use smartbullets::preprocess::PreprocessError;
use smartbullets::synth::SynthError;
use thiserror::Error;

/// Command failure, grouped by the exit code it maps to.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{0}")]
    Server(#[from] smartbullets_server::ServeError),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Io { .. } => 3,
            CliError::Server(e) => match e {
                smartbullets_server::ServeError::ModelLoad(_) => 2,
                smartbullets_server::ServeError::Config(_) => 1,
                _ => 3,
            },
        }
    }

    pub fn io(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
        move |source| CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn data_in(path: &Path) -> impl FnOnce(String) -> CliError + '_ {
        move |msg| CliError::Data(format!("{}: {msg}", path.display()))
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::Io(source) => CliError::Io {
                path: PathBuf::new(),
                source,
            },
            ModelError::Config(msg) => CliError::Usage(msg),
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<PreprocessError> for CliError {
    fn from(e: PreprocessError) -> Self {
        match e {
            PreprocessError::InvalidFraction(_) => CliError::Usage(e.to_string()),
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<CorpusError> for CliError {
    fn from(e: CorpusError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<SynthError> for CliError {
    fn from(e: SynthError) -> Self {
        CliError::Usage(e.to_string())
    }
}
