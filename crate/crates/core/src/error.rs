use thiserror::Error;

use crate::{EpId, NodeId};

/// Errors raised across the planning pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Param(String),

    #[error("circuit needs {qubits} data memories but the network only has {memories}")]
    Capacity { qubits: usize, memories: usize },

    #[error("invalid model: {0}")]
    Model(String),

    #[error("no route between nodes {src} and {dst}")]
    Routing { src: NodeId, dst: NodeId },

    #[error("EP {ep} alone needs {latency:.6} s which exceeds the decoherence threshold {tau:.6} s")]
    Infeasible { ep: EpId, latency: f64, tau: f64 },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("instance of size {size} exceeds the exhaustive-search limit {limit}")]
    TooLarge { size: usize, limit: usize },

    #[error("plan error: {0}")]
    Plan(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
