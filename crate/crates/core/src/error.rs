use thiserror::Error;

/// Errors raised by the clustering pipeline and its building blocks.
#[derive(Debug, Error)]
pub enum Error {
    #[error("empty dataset: {0}")]
    EmptyDataset(String),

    #[error("non-finite feature value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("group {group} has {available} members but its anchor quota is {quota}; lower m")]
    QuotaExceedsGroup {
        group: usize,
        quota: usize,
        available: usize,
    },

    #[error("clustering operator left cluster {0} empty")]
    EmptyCluster(usize),

    #[error("clustering operator returned label {label} for anchor {anchor}, outside [0, {k})")]
    LabelOutOfRange {
        anchor: usize,
        label: usize,
        k: usize,
    },

    #[error("operator `{operator}` is unsupported for this input: {reason}")]
    UnsupportedOperator { operator: String, reason: String },

    #[error("infeasible fairness constraints: {0}")]
    Infeasible(String),

    #[error("non-finite iterate in ADMM at iteration {0}")]
    Diverged(usize),

    #[error("unknown {kind} `{name}`")]
    Unknown { kind: &'static str, name: String },

    #[error("metric undefined: {0}")]
    MetricUndefined(String),

    #[error("csv input: {0}")]
    Csv(String),

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }
}
