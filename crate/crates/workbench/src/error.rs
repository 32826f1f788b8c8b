use std::io;
use std::path::PathBuf;

use thiserror::Error;
use workbench_core::annotation::FieldError;

#[derive(Debug, Error)]
pub enum WorkbenchError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
    #[error("{0}")]
    Invalid(String),
    #[error("validation failed: {}", join_fields(.0))]
    Validation(Vec<FieldError>),
    #[error("unknown session {0}")]
    UnknownSession(String),
    #[error("annotator {annotator} is not assigned to session {session}")]
    UnknownAnnotator { session: String, annotator: String },
    #[error("tweet {tweet} is not a task of annotator {annotator} in session {session}")]
    UnknownTask { session: String, tweet: String, annotator: String },
    #[error("journal: {0}")]
    Journal(String),
}

fn join_fields(errors: &[FieldError]) -> String {
    errors.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
}

impl WorkbenchError {
    pub fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        WorkbenchError::Io { path: path.into(), source }
    }

    pub fn format(path: impl Into<PathBuf>, message: impl ToString) -> Self {
        WorkbenchError::Format { path: path.into(), message: message.to_string() }
    }

    /// Process exit code: 2 for I/O failures, 1 for everything else.
    pub fn exit_code(&self) -> u8 {
        match self {
            WorkbenchError::Io { .. } | WorkbenchError::Journal(_) => 2,
            _ => 1,
        }
    }
}

pub type Result<T, E = WorkbenchError> = std::result::Result<T, E>;
