use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid score set: {0}")]
    InvalidScoreSet(String),

    #[error("invalid hyperparameters: {0}")]
    InvalidHyperparams(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite value in input")]
    NonFinite,

    #[error("rating value {0} is not in the score set")]
    UnknownScore(f64),

    /// The user or item has no learned factors.
    #[error("cold start: {0}")]
    ColdStart(String),

    #[error("training set is empty")]
    EmptyTraining,

    #[error("training diverged: non-finite factors after epoch {epoch}")]
    Diverged { epoch: usize },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("no ratings")]
    NoRatings,

    #[error("unsupported model format version {0}")]
    UnsupportedFormatVersion(u32),

    #[error("unexpected model type {found:?}, expected {expected:?}")]
    ModelType { expected: String, found: String },

    #[error("malformed model file: {0}")]
    MalformedModel(String),

    #[error("all {0} search candidates failed")]
    AllCandidatesFailed(usize),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
