use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("{path}: missing mandatory column `{column}`")]
    MissingColumn { path: PathBuf, column: String },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("degenerate corpus: every document is empty after pruning")]
    DegenerateCorpus,

    #[error("cannot fit {k} topics to a corpus of {tokens} tokens")]
    TooManyTopics { k: usize, tokens: usize },

    #[error("exclusivity undefined for a single topic")]
    SingleTopic,

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("rank-deficient design; collinear columns: {}", .columns.join(", "))]
    RankDeficient { columns: Vec<String> },

    #[error(
        "coordinate descent did not converge after {sweeps} sweeps \
         (last max change {max_change:e}, objective {objective})"
    )]
    NotConverged {
        sweeps: usize,
        max_change: f64,
        objective: f64,
    },

    #[error("label {0} outside 1..=5")]
    InvalidLabel(u8),

    #[error("row {0} has no probability mass")]
    ZeroDistribution(usize),

    #[error("sweep aborted at K={k}: {source}")]
    SweepAborted {
        k: usize,
        partial: Box<crate::selection::SweepTable>,
        #[source]
        source: Box<Error>,
    },

    #[error("fixed-effect absorption did not converge after {iterations} iterations (max group mean {max_mean:e})")]
    AbsorptionNotConverged { iterations: usize, max_mean: f64 },

    #[error("panel unusable: {0}")]
    InsufficientPanel(String),

    #[error("parse error: {0}")]
    Parse(String),
}
