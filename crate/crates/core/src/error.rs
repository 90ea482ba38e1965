use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("non-finite value for {0}")]
    NonFinite(&'static str),

    #[error("invalid {name}: {reason}")]
    InvalidParameter { name: String, reason: String },

    #[error("shape out of range: {0}")]
    Range(String),

    #[error("matrix is rank deficient (smallest pivot {pivot:e})")]
    RankDeficient { pivot: f64 },

    #[error("parameter `{parameter}` is not identifiable from the given samples")]
    Unidentifiable { parameter: &'static str },

    #[error("need at least {needed} samples, got {got}")]
    InsufficientSamples { needed: usize, got: usize },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("plant fault: {0}")]
    PlantFault(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name: name.to_owned(),
        reason: reason.into(),
    }
}
