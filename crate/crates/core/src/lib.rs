//! Distribution of quantum circuits over quantum networks: qubit allocation,
//! entanglement-pair batch scheduling, cat-entanglement selection, a seeded
//! stochastic execution simulator, and an experiment driver.

// Parameter checks are written `!(x > 0.0)` on purpose so NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod allocation;
pub mod baseline;
pub mod catent;
pub mod circuit;
pub mod entanglement;
pub mod error;
pub mod experiment;
pub mod network;
pub mod pipeline;
pub mod scheduling;
pub mod sim;
#[cfg(test)]
mod testutil;

pub use error::{Error, Result};

pub type QubitId = usize;
pub type NodeId = usize;
pub type MemoryId = usize;
/// Index of an expanded EP (one purification copy of one demand).
pub type EpId = usize;
