use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum Error {
    /// Inconsistent or out-of-range parameters (group widths, table shapes, lengths).
    #[error("invalid parameter: {0}")]
    Parameter(String),

    /// An evaluation point or programmed point outside `[0, 2^depth)`.
    #[error("index {index} outside domain of size 2^{depth}")]
    Domain { index: u64, depth: u32 },

    #[error("resource limit exceeded: {0}")]
    Resource(String),

    /// Malformed, truncated, or version-mismatched bytes.
    #[error("malformed encoding: {0}")]
    Format(String),

    /// Epochs must advance by exactly one.
    #[error("epoch sequencing violated: expected {expected}, got {got}")]
    Sequencing { expected: u64, got: u64 },

    #[error("element {element} not present in bin {bin}")]
    Lookup { bin: usize, element: u64 },

    /// Cuckoo insertion could not place every element, even using the stash.
    #[error("cuckoo insertion failed: {unplaced} element(s) left over with stash capacity {stash_capacity}")]
    InsertionFailure { unplaced: usize, stash_capacity: usize },

    /// An operation not valid for the client's current mode (e.g. changing a fixed selection).
    #[error("mode error: {0}")]
    Mode(String),

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("unsupported model: {0}")]
    Unsupported(String),
}

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }

    pub(crate) fn format(msg: impl Into<String>) -> Self {
        Error::Format(msg.into())
    }

    pub(crate) fn protocol(msg: impl Into<String>) -> Self {
        Error::Protocol(msg.into())
    }
}
