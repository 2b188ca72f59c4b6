use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed record at line {line}: {reason}")]
    MalformedRecord { line: usize, reason: String },
    #[error("duplicate frame index {frame}")]
    NonMonotoneFrames { frame: u64 },
    #[error("sequence has no frames")]
    EmptySequence,
    #[error("frame {frame}: coordinate ({x}, {y}) outside grid {width}x{height}")]
    OutOfGrid {
        frame: u64,
        x: f64,
        y: f64,
        width: u32,
        height: u32,
    },
    #[error("i/o failure on {path}: {source}")]
    IoFailure {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("format header mismatch: {0}")]
    VersionMismatch(String),
    #[error("invalid assignment: {0}")]
    InvalidAssignment(String),
    #[error("state space of {size} configurations exceeds limit {limit}")]
    StateSpaceTooLarge { size: f64, limit: f64 },
    #[error("need at least {needed} samples, got {got}")]
    InsufficientSamples { needed: usize, got: usize },
    #[error("degenerate data: {0}")]
    DegenerateData(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("length mismatch: {0}")]
    LengthMismatch(String),
    #[error("symbol {symbol} out of range for alphabet of size {size}")]
    SymbolOutOfRange { symbol: u32, size: u32 },
    #[error("histogram is empty")]
    EmptyHistogram,
    #[error("invalid pmf: {0}")]
    InvalidPmf(String),
    #[error("window {window} too large for sequences of length {mx} and {my}")]
    WindowTooLarge { window: usize, mx: usize, my: usize },
    #[error("empty input")]
    EmptyInput,
    #[error("class {label:?} has {count} member(s), need at least 2")]
    ClassTooSmall { label: String, count: usize },
    #[error("no training data")]
    NoTrainData,
    #[error("invalid spec: {0}")]
    InvalidSpec(String),
    #[error("incompatible alphabets: {0}")]
    IncompatibleAlphabets(String),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("pair ({from}, {to}): {source}")]
    Pair {
        from: String,
        to: String,
        #[source]
        source: Box<Error>,
    },
    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::IoFailure {
            path: path.into(),
            source,
        }
    }

    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }

    /// Stable machine-readable name of the innermost error kind.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::MalformedRecord { .. } => "MalformedRecord",
            Error::NonMonotoneFrames { .. } => "NonMonotoneFrames",
            Error::EmptySequence => "EmptySequence",
            Error::OutOfGrid { .. } => "OutOfGrid",
            Error::IoFailure { .. } => "IoFailure",
            Error::VersionMismatch(_) => "VersionMismatch",
            Error::InvalidAssignment(_) => "InvalidAssignment",
            Error::StateSpaceTooLarge { .. } => "StateSpaceTooLarge",
            Error::InsufficientSamples { .. } => "InsufficientSamples",
            Error::DegenerateData(_) => "DegenerateData",
            Error::DimensionMismatch { .. } => "DimensionMismatch",
            Error::LengthMismatch(_) => "LengthMismatch",
            Error::SymbolOutOfRange { .. } => "SymbolOutOfRange",
            Error::EmptyHistogram => "EmptyHistogram",
            Error::InvalidPmf(_) => "InvalidPmf",
            Error::WindowTooLarge { .. } => "WindowTooLarge",
            Error::EmptyInput => "EmptyInput",
            Error::ClassTooSmall { .. } => "ClassTooSmall",
            Error::NoTrainData => "NoTrainData",
            Error::InvalidSpec(_) => "InvalidSpec",
            Error::IncompatibleAlphabets(_) => "IncompatibleAlphabets",
            Error::InvalidConfig(_) => "InvalidConfig",
            Error::Pair { source, .. } | Error::Context { source, .. } => source.kind(),
        }
    }
}
