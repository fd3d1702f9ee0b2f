use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("field evaluation failed at point {index}: {message}")]
    FieldEvaluation { index: usize, message: String },

    #[error("field provides no analytic Jacobian")]
    NoAnalyticJacobian,

    #[error("singular corrective system at point {index} (determinant {determinant:e})")]
    SingularSystem { index: usize, determinant: f64 },

    #[error("affine inverse problem is singular: alpha = {alpha} is too close to the critical value 1/sqrt(2)")]
    SingularInverse { alpha: f64 },

    #[error("external solver {kind}: {diagnostics}")]
    External { kind: ExternalFailure, diagnostics: String },
}

/// Classification of external solver adapter failures.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExternalFailure {
    Spawn,
    ExitStatus,
    Timeout,
    RowCountMismatch,
    Output,
}

impl std::fmt::Display for ExternalFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            ExternalFailure::Spawn => "could not be started",
            ExternalFailure::ExitStatus => "exited with failure",
            ExternalFailure::Timeout => "timed out",
            ExternalFailure::RowCountMismatch => "returned the wrong number of rows",
            ExternalFailure::Output => "produced unreadable output",
        };
        f.write_str(s)
    }
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
