use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("expected {expected} joint values, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("singular matrix: {0}")]
    Singular(String),

    #[error("calibration data is rank deficient along motor direction {direction:?}")]
    RankDeficient { direction: Vec<f64> },

    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("needle insertion stalled at depth {depth:.4} m: resistance {resistance:.2} N exceeds grip {grip:.2} N")]
    InsertionStall {
        depth: f64,
        resistance: f64,
        grip: f64,
    },

    #[error("controller diverged at t={time:.3} s: position error {error_mm:.2} mm")]
    Divergence { time: f64, error_mm: f64 },

    #[error("record has {len} samples, not enough for a steady-state window")]
    EmptyRecord { len: usize },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, message: impl ToString) -> Self {
        Error::Format {
            path: path.into(),
            message: message.to_string(),
        }
    }
}
