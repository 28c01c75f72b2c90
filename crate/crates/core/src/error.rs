use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid box ({x1}, {y1}, {x2}, {y2}): {reason}")]
    InvalidBox {
        x1: f64,
        y1: f64,
        x2: f64,
        y2: f64,
        reason: &'static str,
    },

    #[error("box ({x1}, {y1}, {x2}, {y2}) lies outside a {width}x{height} image")]
    OutOfBounds {
        x1: f64,
        y1: f64,
        x2: f64,
        y2: f64,
        width: u32,
        height: u32,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("contract violation: {0}")]
    ContractViolation(String),

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("malformed JSON at byte {offset}: {message}")]
    Parse { offset: usize, message: String },

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("unknown image ids referenced by detections: {0:?}")]
    UnknownImages(Vec<u64>),

    #[error("unknown category ids: {0:?}")]
    UnknownCategories(Vec<u32>),

    #[error("every sweep point failed ({0} trials)")]
    AllTrialsFailed(usize),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
