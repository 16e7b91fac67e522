use thiserror::Error;

/// Errors raised anywhere in the crate.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("invalid model: {0}")]
    Validation(String),
    #[error("cannot evaluate rate: {0}")]
    Evaluation(String),
    #[error("the state space is infinite; supply a truncation")]
    InfiniteSpace,
    #[error("the state space has more than {limit} states")]
    CapExceeded { limit: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("the states are not comparable under the order")]
    NotComparable,
    #[error("precondition failed: {0}")]
    PreconditionFailed(String),
    #[error("rates are unbounded on the state space; supply a truncation")]
    UnboundedRates,
    #[error("truncation grew past the hard cap {cap}")]
    TruncationLimit { cap: i64 },
    #[error("all {n} replicates were censored at the horizon")]
    AllCensored { n: usize },
    #[error("the target set is neither increasing nor decreasing")]
    DirectionUnknown,
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
