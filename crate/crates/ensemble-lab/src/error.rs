//! Error type of the command-line front end and its exit codes.

use std::path::PathBuf;

/// Failures of a command, grouped by exit code.
#[derive(Debug, thiserror::Error)]
pub enum LabError {
    /// Bad or missing arguments; exit code 2.
    #[error("usage: {0}")]
    Usage(String),
    /// A numerical routine failed or a check did not pass; exit code 1.
    #[error("{0}")]
    Numerical(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl LabError {
    pub fn exit_code(&self) -> i32 {
        match self {
            LabError::Usage(_) => 2,
            _ => 1,
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        LabError::Io { path: path.into(), source }
    }
}

impl From<ensemble_core::Error> for LabError {
    /// Domain and validation errors come from user-supplied parameters;
    /// the rest are numerical failures.
    fn from(e: ensemble_core::Error) -> Self {
        use ensemble_core::Error as E;
        match e {
            E::Domain { .. } | E::Validation(_) => LabError::Usage(e.to_string()),
            _ => LabError::Numerical(e.to_string()),
        }
    }
}

pub type LabResult<T> = Result<T, LabError>;
