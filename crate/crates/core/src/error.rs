use thiserror::Error;

/// Errors produced anywhere in the adaptation engine.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {context}: expected {expected}, got {actual}")]
    Shape {
        context: &'static str,
        expected: String,
        actual: String,
    },

    #[error("non-finite value at flat index {index} in {context}")]
    NonFinite { context: &'static str, index: usize },

    #[error("{field} = {value} is outside [{low}, {high}]")]
    OutOfRange {
        field: String,
        value: f64,
        low: f64,
        high: f64,
    },

    #[error("optimizer state not initialized: expected {expected} parameter tensors, state has {actual}")]
    UninitializedState { expected: usize, actual: usize },

    #[error("class {class} has no support examples")]
    EmptyClass { class: usize },

    #[error("unlabeled pool is empty")]
    EmptyUnlabeled,

    #[error("training diverged (non-finite loss) at epoch {epoch}")]
    Diverged { epoch: usize },

    #[error("invalid task: {0}")]
    InvalidTask(String),

    #[error("slot {slot} ({module}) failed: {source}")]
    Slot {
        slot: usize,
        module: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("schema violation at {path}: {message}")]
    Schema { path: String, message: String },

    #[error("class {class} has {available} examples but {required} are required")]
    InsufficientExamples {
        class: usize,
        available: usize,
        required: usize,
    },

    #[error("cannot stratify folds: class {class} has {count} support examples, at least 2 are required")]
    Stratification { class: usize, count: usize },

    #[error("parse error at row {row}, column {column}: {message}")]
    Parse {
        row: usize,
        column: String,
        message: String,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("search space has no dimensions")]
    EmptySpace,

    #[error("rank vector has zero variance")]
    ZeroVariance,

    #[error("no accuracy recorded for pipeline {pipeline} on task {task}")]
    MissingCell { pipeline: String, task: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn shape(context: &'static str, expected: impl ToString, actual: impl ToString) -> Self {
        Error::Shape {
            context,
            expected: expected.to_string(),
            actual: actual.to_string(),
        }
    }

    pub(crate) fn schema(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Schema {
            path: path.into(),
            message: message.into(),
        }
    }
}
