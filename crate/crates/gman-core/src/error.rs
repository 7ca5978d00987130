//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A network or data spec violated its own invariants.
    #[error("invalid spec: {0}")]
    InvalidSpec(String),

    /// A vector or matrix had the wrong shape for the operation.
    #[error("shape mismatch in {what}: expected {expected}, got {actual}")]
    ShapeMismatch {
        what: String,
        expected: usize,
        actual: usize,
    },

    /// A non-finite value was found where finite arithmetic is required.
    /// `locus` names the array or pipeline stage that produced it.
    #[error("non-finite value in {locus}")]
    NonFinite { locus: String },

    /// Trajectory or sample data violated a structural invariant.
    #[error("invalid data: {0}")]
    InvalidData(String),

    /// A partition failed validation; each entry describes one violation.
    #[error("partition invalid: {}", .0.join("; "))]
    InvalidPartition(Vec<String>),

    /// A trajectory was handed to a subset that does not own its channel.
    #[error("routing error: channel '{channel}' does not belong to graph subset {subset}")]
    Routing { channel: String, subset: usize },

    /// A sample carries a channel the partition does not know about.
    #[error("unknown channel '{channel}' in sample '{set_id}'")]
    UnknownChannel { channel: String, set_id: String },

    /// Node-level attribution was requested for a graph inside a multi-graph subset.
    #[error(
        "node attribution unavailable: channel '{channel}' belongs to multi-graph subset {subset}; \
         only the subset total is attributable"
    )]
    AttributionIneligible { channel: String, subset: usize },

    /// Graph-level attribution helper called where set-level is required, or vice versa.
    #[error("subset {subset} is a singleton; use the graph contribution instead")]
    UseGraphContribution { subset: usize },

    /// A metric is undefined on the given inputs (e.g. single-class AUROC).
    #[error("metric undefined: {0}")]
    MetricUndefined(String),

    /// Training could not proceed.
    #[error("training error: {0}")]
    Training(String),

    /// Checkpoint file problems: version mismatch, corrupt arrays, etc.
    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    /// Dataset file problems, with a line locus when available.
    #[error("dataset error: {0}")]
    Dataset(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}
