use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Every failure the library can report.
///
/// Variants map onto three CLI exit classes through [`Error::exit_code`]:
/// parameter problems (1), data/validation problems (2) and I/O (3).
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid data: non-finite value at row {row}, dim {dim}")]
    NonFinite { row: usize, dim: usize },

    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("shape error: {0}")]
    Shape(String),

    #[error("inconsistent histogram: counts sum to {sum}, expected {total}")]
    InconsistentHistogram { sum: u64, total: u64 },

    #[error("missing labels: sentence_id {sentence_id} has no pos tags")]
    MissingLabels { sentence_id: i64 },

    #[error("missing label: {0}")]
    MissingLabel(String),

    #[error("empty label set: {0}")]
    EmptyLabelSet(String),

    #[error("undefined measure: {0}")]
    UndefinedMeasure(String),

    #[error("support mismatch: {left} vs {right} bins")]
    SupportMismatch { left: usize, right: usize },

    #[error("not normalized: probabilities sum to {0}")]
    NotNormalized(f64),

    #[error("bad magic in {path}: expected \"HREP1\\n\"")]
    BadMagic { path: PathBuf },

    #[error("truncated payload in {path}: expected {expected} bytes, found {actual}")]
    Truncated { path: PathBuf, expected: u64, actual: u64 },

    #[error("alignment error: tokens={tokens} rows={rows}")]
    Alignment { tokens: usize, rows: usize },

    #[error("parse error in {path} at line {line}: {msg}")]
    Parse { path: PathBuf, line: usize, msg: String },

    #[error("manifest error in {path}: {msg}")]
    Manifest { path: PathBuf, msg: String },

    #[error("undefined correlation: {0}")]
    UndefinedCorrelation(String),

    #[error("insufficient runs: {0}")]
    InsufficientRuns(String),

    #[error("insufficient samples: need at least {needed}, got {got}")]
    InsufficientSamples { needed: usize, got: usize },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Short machine-readable tag, used in `error[<tag>]:` prefixes.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidParameter(_) => "invalid-parameter",
            Error::NonFinite { .. } | Error::InvalidData(_) => "invalid-data",
            Error::Shape(_) => "shape",
            Error::InconsistentHistogram { .. } => "inconsistent-histogram",
            Error::MissingLabels { .. } => "missing-labels",
            Error::MissingLabel(_) => "missing-label",
            Error::EmptyLabelSet(_) => "empty-labelset",
            Error::UndefinedMeasure(_) => "undefined-measure",
            Error::SupportMismatch { .. } => "support-mismatch",
            Error::NotNormalized(_) => "not-normalized",
            Error::BadMagic { .. } => "bad-magic",
            Error::Truncated { .. } => "truncated",
            Error::Alignment { .. } => "alignment",
            Error::Parse { .. } => "parse",
            Error::Manifest { .. } => "manifest",
            Error::UndefinedCorrelation(_) => "undefined-correlation",
            Error::InsufficientRuns(_) => "insufficient-runs",
            Error::InsufficientSamples { .. } => "insufficient-samples",
            Error::Io { .. } => "io",
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidParameter(_) => 1,
            Error::Io { .. } => 3,
            _ => 2,
        }
    }
}
