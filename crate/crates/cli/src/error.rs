use std::path::PathBuf;

use thiserror::Error;
use vd2nn::Error as CoreError;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),

    #[error("data: {0}")]
    Data(CoreError),

    #[error("checkpoint {path}: {detail}", path = .path.display())]
    Checkpoint { path: PathBuf, detail: String },

    #[error("{0}")]
    Core(#[from] CoreError),

    #[error("{path}: {source}", path = .path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn checkpoint(path: impl Into<PathBuf>, detail: impl Into<String>) -> Self {
        CliError::Checkpoint {
            path: path.into(),
            detail: detail.into(),
        }
    }

    /// 1 I/O, 2 configuration, 3 data, 4 checkpoint, 5 numerical regime.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Checkpoint { .. } => 4,
            CliError::Io { .. } => 1,
            CliError::Core(e) => match e {
                CoreError::Regime { .. } | CoreError::ShiftOutOfRange { .. } => 5,
                CoreError::WrongMagic { .. }
                | CoreError::Truncated { .. }
                | CoreError::CountMismatch { .. }
                | CoreError::LabelRange { .. } => 3,
                CoreError::Io { .. } => 1,
                _ => 2,
            },
        }
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;
