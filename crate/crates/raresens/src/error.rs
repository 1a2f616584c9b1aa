use std::path::PathBuf;

use thiserror::Error;

/// Failure of a command, classified by exit code.
#[derive(Debug, Error)]
pub enum AppError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Numerical(#[from] raresens_core::Error),

    #[error("{excluded} of {total} samples had degenerate estimates, above the 10% ceiling")]
    TooManyExclusions { excluded: usize, total: usize },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {detail}")]
    Format { path: PathBuf, detail: String },
}

impl AppError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        AppError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn format(path: impl Into<PathBuf>, detail: impl ToString) -> Self {
        AppError::Format {
            path: path.into(),
            detail: detail.to_string(),
        }
    }

    /// 2 for configuration problems, 3 for numerical failures, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            AppError::Config(_) => 2,
            AppError::Numerical(_) | AppError::TooManyExclusions { .. } => 3,
            AppError::Io { .. } | AppError::Format { .. } => 1,
        }
    }
}

pub type AppResult<T> = Result<T, AppError>;
