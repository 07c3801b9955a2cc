use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Coarse classification used by the command line front end to choose an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    Schema,
    Numerical,
    PostSelection,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("time {t} lies outside the schedule domain [{lo}, {hi}]")]
    ScheduleDomain { t: f64, lo: f64, hi: f64 },

    #[error("wave function reached the grid edge (edge probability {edge_norm:.3e}); enlarge the domain")]
    DomainTooSmall { edge_norm: f64 },

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("post-selection impossible: {0}")]
    PostSelectionImpossible(String),

    #[error("numerical inconsistency: {0}")]
    NumericalInconsistency(String),

    #[error("bound state search failed: {0}")]
    BoundState(String),

    #[error("lambda grid too coarse: {0}")]
    Nyquist(String),

    #[error("weak-limit extraction failed: {0}")]
    WeakLimit(String),

    #[error("degenerate dwell probe: Q'(j) = {0:.3e}")]
    DegenerateProbe(f64),

    #[error("channel completeness defect {0:.3e} exceeds 1e-2")]
    Completeness(f64),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn category(&self) -> ErrorCategory {
        match self {
            Error::InvalidInput(_) | Error::Json(_) | Error::Io(_) => ErrorCategory::Schema,
            Error::PostSelectionImpossible(_) => ErrorCategory::PostSelection,
            _ => ErrorCategory::Numerical,
        }
    }
}
