use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("empty batch")]
    EmptyBatch,
    #[error("no batches supplied to {0}")]
    NoBatches(&'static str),
    #[error("invalid batch: {0}")]
    InvalidBatch(String),
    #[error("layer {index} out of range (network has {layers} layers)")]
    LayerOutOfRange { index: usize, layers: usize },
    #[error("cannot merge {pairs} pairs in a layer of width {width}")]
    InsufficientWidth { pairs: usize, width: usize },
    #[error("increment requires a non-empty recent pool")]
    EmptyRecentPool,
    #[error("invalid structural action: {0}")]
    InvalidAction(String),
    #[error("invalid histogram: {0}")]
    InvalidHistogram(String),
    #[error("gram matrix is not positive definite after jitter escalation")]
    NotPositiveDefinite,
    #[error("hyperparameter search failed: every candidate was degenerate")]
    HyperparameterSearchFailed,
    #[error("gaussian process needs at least {needed} observations, got {got}")]
    TooFewObservations { needed: usize, got: usize },
    #[error("batch {next} evaluated after the network already trained on batch {trained}")]
    OrderingViolation { next: u64, trained: u64 },
    #[error("idx: bad magic number {found:#010x}, expected {expected:#010x}")]
    BadMagic { expected: u32, found: u32 },
    #[error("idx: file truncated ({0})")]
    Truncated(&'static str),
    #[error("idx: {images} images but {labels} labels")]
    CountMismatch { images: usize, labels: usize },
    #[error("idx: label {label} outside 0..{classes}")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("config line {line}: {message}")]
    Config { line: usize, message: String },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("trace: {0}")]
    Trace(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
