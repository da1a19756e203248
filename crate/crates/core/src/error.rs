use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A parameter lies outside its configured range.
    #[error("range error: {0}")]
    Range(String),

    /// Arrivals presented to a detector went backwards in time.
    #[error("ordering error: arrival at {current} s precedes previous arrival at {previous} s")]
    Ordering { previous: f64, current: f64 },

    /// A tag stream that must be sorted was not.
    #[error("unsorted input: element {index} of stream {stream} precedes its predecessor")]
    Unsorted { stream: &'static str, index: usize },

    /// A configured invariant is violated.
    #[error("validation error in {field}: {message}")]
    Validation { field: String, message: String },

    /// Inconsistent experiment configuration (grids, bands, polarization type).
    #[error("configuration error: {0}")]
    Config(String),

    #[error("rank-deficient design: {0}")]
    RankDeficient(String),

    #[error("degenerate dispersion model: {0}")]
    ModelDegenerate(String),

    #[error("no interference fringe found: {0}")]
    NoFringe(String),

    #[error("no dip found: {0}")]
    NoDip(String),

    #[error("insufficient counts: {0}")]
    InsufficientCounts(String),

    #[error("fit did not converge: {0}")]
    NoConvergence(String),

    #[error("format error at row {row}: {message}")]
    Format { row: usize, message: String },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn validation(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Validation {
            field: field.into(),
            message: message.into(),
        }
    }

    /// True for failures of the estimation stage (no fringe, no dip, fit breakdown).
    pub fn is_estimation_failure(&self) -> bool {
        matches!(
            self,
            Error::NoFringe(_)
                | Error::NoDip(_)
                | Error::RankDeficient(_)
                | Error::ModelDegenerate(_)
                | Error::InsufficientCounts(_)
                | Error::NoConvergence(_)
        )
    }
}
