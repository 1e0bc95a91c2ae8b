use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid architecture: {0}")]
    InvalidArch(String),
    #[error("dimension mismatch: expected {expected}, got {actual} ({what})")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },
    #[error("empty dataset")]
    EmptyDataset,
    #[error("label {label} out of range for {num_classes} classes")]
    LabelOutOfRange { label: usize, num_classes: usize },
    #[error("zero-norm vector has no defined cosine similarity")]
    ZeroNorm,
    #[error("need at least 2 classes, got {0}")]
    TooFewClasses(usize),
    #[error("degenerate partition: some node received no samples after {0} draws")]
    DegeneratePartition(usize),
    #[error("image of {features} features cannot hold a {patch}x{patch} patch")]
    PatchDoesNotFit { features: usize, patch: usize },
    #[error("no contributions left to aggregate")]
    NothingToAggregate,
    #[error("total aggregation weight is zero")]
    ZeroWeight,
    #[error("aggregator pool is empty")]
    EmptyPool,
    #[error("empty reputation vector")]
    EmptyReputation,
    #[error("invalid IDX data: {0}")]
    Idx(String),
    #[error("invalid config `{key}`: expected {expected}")]
    Config { key: String, expected: String },
    #[error("non-finite value produced by {0}")]
    NonFinite(&'static str),
}

impl Error {
    pub(crate) fn config(key: &str, expected: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            expected: expected.into(),
        }
    }
}
