use std::path::PathBuf;

use thiserror::Error;

use crate::model::EapcrParams;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: {lhs:?} vs {rhs:?}")]
    Dimension {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    #[error("index {index} out of range for table with {size} rows")]
    Lookup { index: usize, size: usize },

    #[error("contract violated: {0}")]
    Contract(String),

    #[error("invalid tape state: {0}")]
    State(String),

    #[error("non-finite value produced by {op}")]
    NonFinite { op: &'static str },

    #[error("non-finite gradient for parameter `{parameter}`")]
    NonFiniteGradient { parameter: String },

    #[error("training diverged at epoch {epoch}: non-finite loss")]
    Diverged { epoch: usize, last_good: Box<EapcrParams> },

    #[error("fit error: {0}")]
    Fit(String),

    #[error("data error at row {row}, column `{column}`: {message}")]
    Data {
        row: usize,
        column: String,
        message: String,
    },

    #[error("imputation error: {0}")]
    Imputation(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("schema error: {0}")]
    Schema(String),

    #[error("checkpoint format error: {0}")]
    Format(String),

    #[error("checkpoint integrity error: {0}")]
    Integrity(String),

    #[error("linear solver error: {0}")]
    Solver(String),

    #[error("metric `{0}` is undefined for this input")]
    UndefinedMetric(&'static str),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Toml(#[from] toml::de::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures of the numerics (divergence, singular systems)
    /// as opposed to bad input or configuration.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::NonFinite { .. }
                | Error::NonFiniteGradient { .. }
                | Error::Diverged { .. }
                | Error::Solver(_)
                | Error::UndefinedMetric(_)
        )
    }

    /// Process exit status: 1 for config/data problems, 2 for numeric failures.
    pub fn exit_code(&self) -> i32 {
        if self.is_numeric() {
            2
        } else {
            1
        }
    }
}
