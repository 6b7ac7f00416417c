use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("duplicate example id {0:?}")]
    DuplicateId(String),
    #[error("example {id:?} has label {label} but the dataset declares {classes} classes")]
    LabelOutOfRange { id: String, label: usize, classes: usize },
    #[error("example {id:?} has an empty domain")]
    EmptyDomain { id: String },
    #[error("dimension mismatch for {id:?}: expected {expected}, found {found}")]
    Dimension { id: String, expected: usize, found: usize },
    #[error("embedding sidecar references unknown id {0:?}")]
    UnknownId(String),
    #[error("domain {domain:?} has {available} labeled examples, {needed} needed")]
    InsufficientExamples { domain: String, needed: usize, available: usize },
    #[error("unknown domain {0:?}")]
    UnknownDomain(String),
    #[error("no source domains besides the target {0:?}")]
    NoSourceDomains(String),
    #[error("example {id:?} has no {space} embedding")]
    MissingEmbedding { id: String, space: &'static str },
    #[error("example {id:?} has no field {field:?}")]
    MissingField { id: String, field: String },
    #[error("example {id:?} has no label")]
    MissingLabel { id: String },
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error("training diverged with learning rate {lr}")]
    Divergence { lr: f64 },
    #[error("grid search failed: every cell errored (last: {last})")]
    SearchFailed { last: Box<Error> },
    #[error("labels contain a single class")]
    SingleClass,
    #[error("sample weight {0} is not positive")]
    NonPositiveWeight(f64),
    #[error("{folds}-fold split impossible: class {class} has {count} examples")]
    FoldsImpossible { folds: usize, class: u8, count: usize },
    #[error("acquisition model made no errors on the held-out target half")]
    NoErrors,
    #[error("budget {n} exceeds the {available} available source examples")]
    BudgetExceedsPool { n: usize, available: usize },
    #[error("family {0:?} has fewer than two members")]
    FamilyTooSmall(String),
    #[error("intra-family range of {0:?} is empty (min = max)")]
    UndefinedRange(String),
    #[error("enumeration of {count} compositions exceeds the cap of {cap}")]
    EnumerationCap { count: u128, cap: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("cell ({method}, {target}) failed: {source}")]
    Cell {
        method: String,
        target: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::InvalidConfig(msg.into())
    }
}
