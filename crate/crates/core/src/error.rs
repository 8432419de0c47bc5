use std::path::PathBuf;

/// Errors produced by the recognizer library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("invalid PGM data: {0}")]
    Pgm(String),

    #[error("bad magic in checkpoint (expected \"ARGS\")")]
    BadMagic,

    #[error("unsupported checkpoint version {found} (this build reads {expected})")]
    VersionMismatch { found: u16, expected: u16 },

    #[error("checkpoint truncated while reading {what}")]
    Truncated { what: String },

    #[error("malformed checkpoint: {0}")]
    Checkpoint(String),

    #[error("invalid network configuration: {0}")]
    InvalidConfig(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("writing of width {width} is narrower than the {tile}-pixel input tile")]
    TooNarrow { width: usize, tile: usize },

    #[error("target of length {target_len} needs {required} frames but only {frames} are available")]
    InfeasibleTarget {
        target_len: usize,
        required: usize,
        frames: usize,
    },

    #[error("label {label} is outside the alphabet (size {size})")]
    LabelOutOfRange { label: usize, size: usize },

    #[error("text {text:?} cannot be spelled with the alphabet")]
    Unspellable { text: String },

    #[error("alphabet error: {0}")]
    Alphabet(String),

    #[error("lexicon is empty")]
    EmptyLexicon,

    #[error("corpus error: {0}")]
    Corpus(String),

    #[error("no reference lines to evaluate")]
    EmptyReference,

    #[error("page {page} has no lines")]
    EmptyPage { page: String },

    #[error("non-finite gradient in {tensor} at epoch {epoch}")]
    NonFinite { tensor: String, epoch: usize },

    #[error("epoch must be >= 1 (got {0})")]
    InvalidEpoch(usize),

    #[error("too many infeasible CTC targets: {infeasible} of {total} lines in epoch {epoch}")]
    TooManyInfeasible {
        infeasible: usize,
        total: usize,
        epoch: usize,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by numeric breakdown rather than bad input.
    pub fn is_numeric(&self) -> bool {
        matches!(self, Error::NonFinite { .. })
    }
}

pub type Result<T> = std::result::Result<T, Error>;
