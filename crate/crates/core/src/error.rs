use thiserror::Error;

/// Errors produced by every module in the crate.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("vector norm below 1e-12")]
    ZeroNorm,
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("empty input")]
    EmptyInput,
    #[error("need at least {needed} samples, got {actual}")]
    TooFewSamples { needed: usize, actual: usize },
    #[error("need at least {k} points for k = {k}, got {actual}")]
    TooFewPoints { k: usize, actual: usize },
    #[error("index {index} out of range for length {len}")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("class index {index} out of range (valid {min}..={max})")]
    ClassIndexOutOfRange { index: usize, min: usize, max: usize },
    #[error("non-finite value in feature vector")]
    NonFinite,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("malformed snapshot: {0}")]
    MalformedSnapshot(String),
    #[error("snapshot version mismatch: expected {expected}, found {found}")]
    VersionMismatch { expected: String, found: String },
    #[error("prototype pair coincides (distance below 1e-12)")]
    DegeneratePair,
    #[error("empty batch")]
    EmptyBatch,
    #[error("K = {k} exceeds the {available} available queries")]
    KTooLarge { k: usize, available: usize },
    #[error("empty selection")]
    EmptySelection,
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("metric undefined: {0}")]
    UndefinedMetric(&'static str),
}

pub type Result<T> = std::result::Result<T, Error>;
