use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty input")]
    EmptyInput,
    #[error("empty logical form")]
    EmptyForm,
    #[error("unbalanced parentheses in turn {0}")]
    UnbalancedParens(usize),
    #[error("parameter surface `{0}` does not occur in the logical form")]
    MissingSurface(String),
    #[error("parameter spans overlap")]
    OverlappingSpans,
    #[error("entity `{0}` has no position in the question")]
    UnknownEntity(String),
    #[error("template expects {expected} fillers, got {got}")]
    ArityMismatch { expected: usize, got: usize },
    #[error("line {line}: {message}")]
    ParseError { line: usize, message: String },
    #[error("span [{start},{end}] out of range for a {len}-token question")]
    SpanOutOfRange { start: usize, end: usize, len: usize },
    #[error("span [{start},{end}] does not spell surface `{surface}`")]
    SpanMismatch { surface: String, start: usize, end: usize },
    #[error("malformed block {0}")]
    MalformedBlock(usize),
    #[error("split ratios must be non-negative and sum to 1")]
    BadRatios,
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("bad label at position {0}")]
    BadLabel(usize),
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("no patterns indexed for class `{0}`")]
    EmptyClass(String),
    #[error("empty candidate")]
    EmptyCandidate,
    #[error("no candidates generated")]
    NoCandidates,
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("unsupported checkpoint version {0}")]
    Version(u32),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
