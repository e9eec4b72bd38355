use alloc::string::String;

use crate::features::LayoutFactor;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("rank correlation undefined: every value of one argument is tied")]
    AllTied,

    #[error("average precision undefined: no positive labels")]
    NoPositives,

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("cannot normalize a zero vector")]
    ZeroVector,

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("layout mismatch in {factor}: expected {expected}, found {found}")]
    LayoutMismatch {
        factor: LayoutFactor,
        expected: u64,
        found: String,
    },

    #[error("duplicate id `{0}`")]
    DuplicateId(String),

    #[error("matrix is not positive definite (pivot {pivot})")]
    NotPositiveDefinite { pivot: usize },

    #[error("solver did not converge after {iterations} iterations (violation {violation:.3e})")]
    NonConvergence { iterations: usize, violation: f64 },

    #[error("training labels contain a single class")]
    SingleClass,

    #[error("splits overlap on id `{0}`")]
    OverlappingSplits(String),

    #[error("need at least {needed} items, have {available}")]
    NotEnoughItems { needed: usize, available: usize },

    #[error("missing score for `{0}`")]
    MissingScore(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
