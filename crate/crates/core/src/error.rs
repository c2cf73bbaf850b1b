use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected} values, got {actual}")]
    Dimension { expected: usize, actual: usize },

    #[error("sigma {0} outside [0, 1]")]
    SigmaOutOfRange(f64),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("malformed task document: {0}")]
    MalformedTask(String),

    #[error("frame {frame} has {actual} markers, expected {expected}")]
    InconsistentMarkers {
        frame: usize,
        expected: usize,
        actual: usize,
    },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error(
        "rejection sampling gave up after {attempts} draws ({accepted} of {wanted} accepted); limits look infeasible"
    )]
    RejectionBudget {
        attempts: u64,
        accepted: usize,
        wanted: usize,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
