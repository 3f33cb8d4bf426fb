use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {context}: expected {expected}, got {actual}")]
    Shape {
        context: String,
        expected: usize,
        actual: usize,
    },

    #[error("empty question")]
    EmptyQuestion,

    #[error("target class {target} out of range for {classes} classes")]
    TargetOutOfRange { target: usize, classes: usize },

    #[error("non-finite gradient in parameter block `{0}`")]
    NonFiniteGradient(String),

    #[error("non-finite loss: {0}")]
    NonFiniteLoss(String),

    #[error("missing forward cache: {0}")]
    MissingCache(&'static str),

    #[error("no countable noun in question `{0}`")]
    NoCountableNoun(String),

    #[error("no eligible question: {0}")]
    NoEligibleQuestion(String),

    #[error("placement infeasible: {0}")]
    Placement(String),

    #[error("unknown vocabulary item `{0}`")]
    UnknownSlot(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("value {value} outside [{lo}, {hi}]")]
    OutOfRange { value: i64, lo: i64, hi: i64 },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
