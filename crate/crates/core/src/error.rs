use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the solver, the models and the data pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("singular matrix: pivot {pivot:e} at step {step} below threshold {threshold:e}")]
    SingularMatrix {
        step: usize,
        pivot: f64,
        threshold: f64,
    },

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("class {0:+} has no samples")]
    MissingClass(i8),

    #[error("insufficient class samples: {0}")]
    InsufficientClassSamples(String),

    #[error("wrong model kind: expected {expected}, found {found}")]
    WrongModelKind {
        expected: &'static str,
        found: &'static str,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at row {row}, column {col}: {message}")]
    Parse {
        row: u64,
        col: usize,
        message: String,
    },

    #[error("expected exactly 2 distinct labels, found {found}: {labels:?}")]
    LabelCardinality { found: usize, labels: Vec<String> },

    #[error("dataset {name}: expected {expected_m}x{expected_n}, loaded {m}x{n}")]
    ManifestMismatch {
        name: String,
        expected_m: usize,
        expected_n: usize,
        m: usize,
        n: usize,
    },

    #[error("unknown dataset {0}")]
    UnknownDataset(String),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Stable machine-readable name of the variant.
    pub fn code(&self) -> &'static str {
        match self {
            Error::DimensionMismatch(_) => "dimension_mismatch",
            Error::SingularMatrix { .. } => "singular_matrix",
            Error::NonFinite(_) => "non_finite",
            Error::InvalidParameter(_) => "invalid_parameter",
            Error::MissingClass(_) => "missing_class",
            Error::InsufficientClassSamples(_) => "insufficient_class_samples",
            Error::WrongModelKind { .. } => "wrong_model_kind",
            Error::Io { .. } => "io",
            Error::Parse { .. } => "parse",
            Error::LabelCardinality { .. } => "label_cardinality",
            Error::ManifestMismatch { .. } => "manifest_mismatch",
            Error::UnknownDataset(_) => "unknown_dataset",
            Error::Json(_) => "json",
            Error::Csv(_) => "csv",
        }
    }

    pub fn is_singular(&self) -> bool {
        matches!(self, Error::SingularMatrix { .. })
    }
}

pub type Result<T> = std::result::Result<T, Error>;
