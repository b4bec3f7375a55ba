use std::path::PathBuf;

/// Errors raised across the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("unknown category {category} at line {line}")]
    UnknownCategory { category: usize, line: usize },

    #[error("empty token list for request {0}")]
    EmptyTokens(String),

    #[error("incomplete gold labels: request {0} has no gold_categories in a test split")]
    IncompleteGold(String),

    #[error("invalid category metadata: {0}")]
    InvalidCategories(String),

    #[error("infeasible split: {0}")]
    InfeasibleSplit(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("out-of-vocabulary token {0:?}")]
    OutOfVocabulary(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("rank must be >= 1, got {0}")]
    InvalidRank(usize),

    #[error("request {0} has an empty positive set")]
    EmptyPositives(usize),

    #[error("label weight {weight} outside [0, 1] for request {request}, category {category}")]
    WeightOutOfRange {
        request: usize,
        category: usize,
        weight: f64,
    },

    #[error("labels for request {request} are invalid: {message}")]
    InvalidLabels { request: usize, message: String },

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("category {0} has no annotated requests")]
    EmptyCategory(usize),

    #[error("no (request, foreign category) pairs to average over")]
    NoEligiblePairs,

    #[error("mean distance must be positive, got {0}")]
    NonPositiveMeanDistance(f64),

    #[error("empty gold set for request {0}")]
    EmptyGold(usize),

    #[error("malformed ranking for request {request}: {message}")]
    MalformedRanking { request: usize, message: String },

    #[error("length mismatch: {0}")]
    LengthMismatch(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
