use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("path count overflows: {0}")]
    Overflow(String),

    #[error("dimension mismatch: expected {expected}, got {got} ({context})")]
    DimensionMismatch {
        expected: usize,
        got: usize,
        context: &'static str,
    },

    #[error("invalid correlation specification: {0}")]
    InvalidCorrelation(String),

    #[error("inconsistent perfect correlations: {0}")]
    InconsistentGroups(String),

    #[error("residual correlation matrix is not positive semi-definite (smallest eigenvalue {min_eigenvalue:.3e})")]
    NotPositiveSemiDefinite { min_eigenvalue: f64 },

    #[error("copula CDF did not reach tolerance {requested:.1e} (achieved {achieved:.3e} after {points} points)")]
    CdfAccuracy {
        requested: f64,
        achieved: f64,
        points: usize,
    },

    #[error("degenerate cell on axis {axis}: [{lo}, {hi}]")]
    DegenerateCell { axis: usize, lo: f64, hi: f64 },

    #[error("corner {corner} has probability {value:.3e}, below tolerance -{tolerance:.1e}")]
    NegativeProbability {
        corner: usize,
        value: f64,
        tolerance: f64,
    },

    #[error("corner sampling failed: {0}")]
    CornerSampling(String),

    #[error("no elementary effects to summarize")]
    EmptyEffects,

    #[error("expected {expected} model outputs for path {path}, got {got}")]
    OutputShape {
        path: usize,
        expected: usize,
        got: usize,
    },

    #[error("objective undefined: {0}")]
    UndefinedObjective(String),

    #[error("invalid buffer model input: {0}")]
    Bufferbox(String),

    #[error("configuration error in `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("model failed: {0}")]
    Model(String),

    #[error("evaluation of point {index} failed: {message}")]
    Evaluation { index: usize, message: String },

    #[error("{} evaluation point(s) missing from records: {}", missing.len(), format_indices(missing))]
    IncompleteRecords { missing: Vec<usize> },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{context}: {source}")]
    Json {
        context: String,
        #[source]
        source: serde_json::Error,
    },

    #[error("{context}: {source}")]
    Csv {
        context: String,
        #[source]
        source: csv::Error,
    },
}

impl Error {
    pub fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

fn format_indices(indices: &[usize]) -> String {
    const SHOWN: usize = 20;
    let mut out = indices
        .iter()
        .take(SHOWN)
        .map(|i| i.to_string())
        .collect::<Vec<_>>()
        .join(", ");
    if indices.len() > SHOWN {
        out.push_str(", ...");
    }
    out
}
