use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{file}:{line}: invalid {field}: {message}")]
    Parse {
        file: String,
        line: u64,
        field: String,
        message: String,
    },

    #[error("{file}: missing or malformed header, expected `{expected}`")]
    Header { file: String, expected: String },

    #[error("no data for subject {0}")]
    NoData(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("invalid probability grid: {0}")]
    InvalidGrid(String),

    #[error("curve for subject {0} is not nondecreasing")]
    NotMonotone(String),

    #[error("degenerate sample: need at least one case and one control (cases={cases}, controls={controls})")]
    DegenerateSample { cases: usize, controls: usize },

    #[error("no candidate cut-points inside the requested range [{lower}, {upper}]")]
    EmptyCandidateRange { lower: f64, upper: f64 },

    #[error("bootstrap infeasible: {0}")]
    BootstrapInfeasible(String),

    #[error("length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures caused by missing or unreadable inputs rather than by
    /// the computation itself.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::Io { .. } | Error::Parse { .. } | Error::Header { .. } | Error::Csv(_) | Error::Json(_)
        )
    }
}
