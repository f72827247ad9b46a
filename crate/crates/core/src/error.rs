use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = FateError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum FateError {
    #[error("shape error in {op}: {lhs:?} vs {rhs:?}")]
    Shape {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    #[error("contract violated: {0}")]
    Contract(String),

    #[error("non-finite value at stage `{stage}`")]
    Numeric { stage: String },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("missing coordinates for station(s): {}", .0.join(", "))]
    MissingCoords(Vec<String>),

    #[error("degenerate column(s) (zero variance): {}", .0.join(", "))]
    Degenerate(Vec<String>),

    #[error("bad file format in {path}: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl FateError {
    pub fn contract(msg: impl Into<String>) -> Self {
        FateError::Contract(msg.into())
    }

    pub fn shape(op: &'static str, lhs: &[usize], rhs: &[usize]) -> Self {
        FateError::Shape {
            op,
            lhs: lhs.to_vec(),
            rhs: rhs.to_vec(),
        }
    }

    pub fn numeric(stage: impl Into<String>) -> Self {
        FateError::Numeric {
            stage: stage.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        FateError::Io {
            path: path.into(),
            source,
        }
    }

    /// Stable machine-parsable code used by the command-line front end.
    pub fn code(&self) -> &'static str {
        match self {
            FateError::Shape { .. } => "E_SHAPE",
            FateError::Contract(_) => "E_CONTRACT",
            FateError::Numeric { .. } => "E_NUMERIC",
            FateError::Schema(_) => "E_SCHEMA",
            FateError::MissingCoords(_) => "E_COORDS",
            FateError::Degenerate(_) => "E_DEGENERATE",
            FateError::Format { .. } => "E_FORMAT",
            FateError::Io { .. } => "E_IO",
            FateError::Json(_) => "E_FORMAT",
            FateError::Csv(_) => "E_SCHEMA",
        }
    }
}
