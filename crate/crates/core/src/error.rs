use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed WAV: {0}")]
    MalformedWav(String),

    #[error("unsupported WAV encoding: {0}")]
    UnsupportedEncoding(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("sample {index} = {value} is outside [-1, 1]; clip or normalize before writing")]
    OutOfRange { index: usize, value: f64 },

    #[error("{groups} singer group(s) cannot fill {splits} non-empty split(s)")]
    InsufficientSingers { groups: usize, splits: usize },

    #[error("pairing impossible: {0}")]
    PairingImpossible(String),

    #[error("source has zero energy")]
    SilentSource,

    #[error("degenerate metric input: {0}")]
    DegenerateInput(String),

    #[error("invalid configuration: {0}")]
    ConfigInvalid(String),

    #[error("malformed pitch CSV at line {line}: {message}")]
    MalformedCsv { line: usize, message: String },

    #[error("pitch track has {found} frames, expected {expected}")]
    FrameCountMismatch { expected: usize, found: usize },

    #[error("sequence of length {len} is too short (need at least {min})")]
    TooShort { len: usize, min: usize },

    #[error("pitch tracks differ: {0}")]
    FrameMismatch(String),

    #[error("backend `{model_id}` failed: {message}")]
    BackendFailure { model_id: String, message: String },

    #[error("backend `{model_id}` violated its output contract: {message}")]
    ContractViolation { model_id: String, message: String },

    #[error("malformed registry: {0}")]
    MalformedRegistry(String),

    #[error("duplicate model id `{0}` in registry")]
    DuplicateModelId(String),

    #[error("no candidate models to select from")]
    NoCandidates,

    #[error("missing estimates for {} pair(s): {}", .0.len(), .0.join(", "))]
    MissingEstimate(Vec<String>),

    #[error("json error: {0}")]
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
