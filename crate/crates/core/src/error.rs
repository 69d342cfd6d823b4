use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("{message}, pair {pair_id} (field `{field}`)")]
    Invariant {
        pair_id: String,
        field: &'static str,
        message: String,
    },

    #[error("unknown label `{0}` (expected ent, neu or con)")]
    UnknownLabel(String),

    #[error("event references unknown pair {0}")]
    UnknownPair(String),

    #[error("annotator {annotator_id} already annotated pair {pair_id}")]
    DuplicateAnnotation {
        pair_id: String,
        annotator_id: String,
    },

    #[error("raw slider value {0} outside [0, 10000]")]
    SliderRange(f64),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("missing label class {0} in training split")]
    MissingLabelClass(&'static str),

    #[error("label ordering violated: {0}")]
    LabelOrdering(String),

    #[error("pair {0} has no categorical label")]
    Unlabeled(String),

    #[error("pair {0} has no gold score")]
    MissingGold(String),

    #[error("pair {0} has no feature vector")]
    MissingFeatures(String),

    #[error("{0}")]
    Config(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: message.into(),
        }
    }
}
