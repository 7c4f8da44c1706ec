use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {field}: {message}")]
    Config {
        path: PathBuf,
        field: String,
        message: String,
    },

    #[error("{path}: {source}")]
    Input {
        path: PathBuf,
        source: dsbridge::Error,
    },

    #[error("{0}")]
    Validation(String),

    /// Outputs were written but the run did not meet its stopping rule.
    #[error("{0}")]
    NotConverged(String),

    #[error(transparent)]
    Core(#[from] dsbridge::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        use dsbridge::Error as E;
        match self {
            CliError::Config { .. } | CliError::Validation(_) => 2,
            CliError::NotConverged(_) => 3,
            CliError::Input { source, .. } | CliError::Core(source) => match source {
                E::NonConvergence { .. } | E::TrainingDiverged { .. } | E::InfiniteDivergence => 3,
                E::CapExceeded { .. } => 4,
                _ => 2,
            },
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
