use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("unsupported audio format: {0}")]
    UnsupportedFormat(String),

    #[error("malformed wav header: {0}")]
    MalformedHeader(String),

    #[error("invalid pad length {pad_len} for window {window}")]
    InvalidPadLen { pad_len: usize, window: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("degenerate kernel: spectral norm estimate is zero")]
    DegenerateKernel,

    #[error("virtual batch norm used before its reference statistics were set")]
    UninitializedState,

    #[error("channel count {channels} is not divisible by reduction factor {k}")]
    IndivisibleChannels { channels: usize, k: usize },

    #[error("layer index {layer} outside 1..={max}")]
    OutOfRangeLayer { layer: usize, max: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("empty dataset")]
    EmptyDataset,

    #[error("loss diverged at step {step}: {detail}")]
    DivergedLoss { step: usize, detail: String },

    #[error("checkpoint format version {found} not supported (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },

    #[error("checkpoint configuration mismatch: {0}")]
    ConfigMismatch(String),

    #[error("corrupt checkpoint: {0}")]
    CorruptFile(String),

    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),

    #[error("clean signal is silent in every frame")]
    AllSilent,

    #[error("signal too short for analysis: {0}")]
    TooShort(String),

    #[error("no matching file for stem `{0}`")]
    Unpaired(String),

    #[error("{id}: {source}")]
    InFile {
        id: String,
        #[source]
        source: Box<Error>,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn in_file(id: impl Into<String>, source: Error) -> Self {
        Error::InFile {
            id: id.into(),
            source: Box::new(source),
        }
    }

    /// Innermost error, looking through per-file wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::InFile { source, .. } => source.root(),
            other => other,
        }
    }
}
