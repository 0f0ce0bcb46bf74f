use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{0}: empty input")]
    EmptyInput(String),

    #[error("{source_name}: line {line}: expected {expected} fields, found {found}")]
    RaggedRow {
        source_name: String,
        line: usize,
        expected: usize,
        found: usize,
    },

    #[error("{source_name}: line {line}: cannot parse {token:?} as a finite number")]
    Parse {
        source_name: String,
        line: usize,
        token: String,
    },

    #[error("{source_name}: line {line}: value {value} out of range ({reason})")]
    Range {
        source_name: String,
        line: usize,
        value: String,
        reason: String,
    },

    #[error("{source_name}: line {line}: row sums to {sum}, expected 1 within 1e-6")]
    Normalization {
        source_name: String,
        line: usize,
        sum: f64,
    },

    #[error("shape error: {0}")]
    Shape(String),

    #[error("degenerate feature: row {row} has zero norm under cosine similarity")]
    DegenerateFeature { row: usize },

    #[error("kernel is not positive definite ({context}); increase the ridge epsilon")]
    IndefiniteKernel { context: String },

    #[error("configuration error: {0}")]
    Configuration(String),

    #[error("index {0} is already selected")]
    Duplicate(usize),

    #[error("index {index} out of bounds for ground set of size {size}")]
    OutOfBounds { index: usize, size: usize },

    #[error("size error: {0}")]
    Size(String),

    #[error("training diverged at epoch {epoch} (non-finite loss); use a smaller learn_rate")]
    Divergence { epoch: usize },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code used by the CLI: 2 for input/format problems,
    /// 3 for configuration problems, 4 for numerical failure.
    pub fn exit_code(&self) -> u8 {
        match self {
            Error::Io { .. }
            | Error::EmptyInput(_)
            | Error::RaggedRow { .. }
            | Error::Parse { .. }
            | Error::Range { .. }
            | Error::Normalization { .. }
            | Error::Shape(_)
            | Error::DegenerateFeature { .. }
            | Error::Json(_) => 2,
            Error::Configuration(_) | Error::Size(_) | Error::Duplicate(_) | Error::OutOfBounds { .. } => 3,
            Error::IndefiniteKernel { .. } | Error::Divergence { .. } => 4,
        }
    }
}
