//! Engine error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration, window parameters, or workload description.
    #[error("configuration error: {0}")]
    Config(String),

    /// Graph construction rejected the description.
    #[error("invalid graph: {violations:?}")]
    Graph { violations: Vec<String> },

    /// A watermark on an edge regressed below an earlier one.
    #[error("watermark regression on edge {edge}: {previous} -> {current}")]
    WatermarkRegression { edge: String, previous: u64, current: u64 },

    /// Loop guard bookkeeping lost track of a pending tuple.
    #[error("loop guard invariant violated: {0}")]
    GuardInvariant(String),

    /// A cyclic run exceeded its step budget without quiescing.
    #[error("run did not quiesce within {budget} steps; in flight: {in_flight}")]
    NonQuiescent { budget: u64, in_flight: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}
