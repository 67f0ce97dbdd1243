use alloc::string::String;

/// Errors raised by the core algorithms.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error("view unusable: breast interior is empty")]
    EmptyInterior,
    #[error("region of interest yields no valid statistic")]
    Degenerate,
    #[error("training set contains a single class")]
    SingleClass,
    #[error("k = {k} exceeds training size {n}")]
    NeighborsExceedRows { k: usize, n: usize },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("need at least two distinct years, found {0}")]
    TooFewYears(usize),
    #[error("fold holding out {year} has a single-class training complement")]
    FoldLacksClass { year: i32 },
    #[error("{what} did not converge after {iterations} iterations")]
    NonConvergence { what: &'static str, iterations: usize },
    #[error("missing data: {0}")]
    Missing(String),
}

pub type Result<T, E = Error> = core::result::Result<T, E>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
