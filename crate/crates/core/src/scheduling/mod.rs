//! Batching of EP generation under the decoherence deadline: demand
//! derivation, the consumption order, the DP and greedy schedulers, an
//! exhaustive oracle, and schedule validation.

mod order;
mod solve;
mod validate;

pub use order::{ConsumptionOrder, GateOrder};
pub use solve::{brute_force_schedule, dp_schedule, greedy_schedule, BRUTE_FORCE_LIMIT};
pub use validate::{validate_schedule, ValidationReport, Violation};

use serde::{Deserialize, Serialize};

use crate::circuit::Circuit;
use crate::entanglement::{purification_copies, EpDemand, Origin, RouteTable, SharingModel};
use crate::error::{Error, Result};
use crate::{EpId, NodeId};

/// Batch latency of EP sets, described by per-class counts. Implementations
/// must be monotone under inclusion; the DP relies on it to stop scanning.
pub trait LatencyOracle: Sync {
    fn num_eps(&self) -> usize;
    fn num_classes(&self) -> usize;
    fn class_of(&self, ep: EpId) -> usize;
    fn latency(&self, counts: &[u32]) -> f64;

    fn latency_of(&self, eps: &[EpId]) -> f64 {
        let mut counts = vec![0u32; self.num_classes()];
        for &e in eps {
            counts[self.class_of(e)] += 1;
        }
        self.latency(&counts)
    }

    fn singleton(&self, ep: EpId) -> f64 {
        self.latency_of(&[ep])
    }
}

/// Proportional-sharing batch latency over routed EPs.
#[derive(Debug, Clone)]
pub struct SharedLatency {
    model: SharingModel,
    class: Vec<usize>,
}

impl SharedLatency {
    /// `eps[i]` is the endpoint pair of EP `i`.
    pub fn new(routes: &RouteTable, eps: &[(NodeId, NodeId)]) -> Result<Self> {
        let model = SharingModel::new(routes, eps.iter().copied())?;
        let class = eps
            .iter()
            .map(|&(a, b)| model.class_of(a, b).ok_or(Error::Routing { src: a, dst: b }))
            .collect::<Result<_>>()?;
        Ok(SharedLatency { model, class })
    }

    pub fn model(&self) -> &SharingModel {
        &self.model
    }
}

impl LatencyOracle for SharedLatency {
    fn num_eps(&self) -> usize {
        self.class.len()
    }

    fn num_classes(&self) -> usize {
        self.model.num_classes()
    }

    fn class_of(&self, ep: EpId) -> usize {
        self.class[ep]
    }

    fn latency(&self, counts: &[u32]) -> f64 {
        self.model.estimate(counts).makespan()
    }
}

/// EPs with fixed individual latencies generated concurrently without
/// interference: a batch takes as long as its slowest member.
#[derive(Debug, Clone, PartialEq)]
pub struct DisjointLatency {
    pub latencies: Vec<f64>,
}

impl LatencyOracle for DisjointLatency {
    fn num_eps(&self) -> usize {
        self.latencies.len()
    }

    fn num_classes(&self) -> usize {
        self.latencies.len()
    }

    fn class_of(&self, ep: EpId) -> usize {
        ep
    }

    fn latency(&self, counts: &[u32]) -> f64 {
        counts.iter().zip(&self.latencies).filter(|(&k, _)| k > 0).map(|(_, &l)| l).fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Batch {
    pub eps: Vec<EpId>,
    pub latency: f64,
}

/// Ordered EP batches; generation of batch `i+1` starts after batch `i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub batches: Vec<Batch>,
    pub total_latency: f64,
}

impl Schedule {
    pub fn new(batches: Vec<Batch>) -> Self {
        let total_latency = batches.iter().map(|b| b.latency).sum();
        Schedule { batches, total_latency }
    }

    /// Builds batches from EP sets, pricing each with `oracle`.
    pub fn from_sets(sets: Vec<Vec<EpId>>, oracle: &dyn LatencyOracle) -> Self {
        Self::new(sets.into_iter().map(|eps| Batch { latency: oracle.latency_of(&eps), eps }).collect())
    }

    pub fn num_eps(&self) -> usize {
        self.batches.iter().map(|b| b.eps.len()).sum()
    }
}

/// Telegate demands: one per remote binary gate, with purification copies.
#[derive(Debug, Clone, PartialEq)]
pub struct TelegateDemands {
    pub demands: Vec<EpDemand>,
    /// Demand index of each circuit gate, `None` for unary and local gates.
    pub gate_demand: Vec<Option<usize>>,
}

/// `qubit_nodes[q]` is the node hosting qubit `q`.
pub fn derive_ep_demands(
    circuit: &Circuit,
    qubit_nodes: &[NodeId],
    routes: &RouteTable,
    hops_per_copy: usize,
) -> TelegateDemands {
    let mut demands = Vec::new();
    let gate_demand = circuit
        .gates
        .iter()
        .enumerate()
        .map(|(g, gate)| {
            let (a, b) = gate.pair()?;
            let (na, nb) = (qubit_nodes[a], qubit_nodes[b]);
            (na != nb).then(|| {
                demands.push(EpDemand {
                    src: na,
                    dst: nb,
                    multiplicity: purification_copies(routes.hops(na, nb), hops_per_copy),
                    origin: Origin::Gate(g),
                });
                demands.len() - 1
            })
        })
        .collect();
    TelegateDemands { demands, gate_demand }
}

/// Consumption order over the expanded EPs of `demands`; EPs inherit the
/// order of the gates named by `gate_of_demand`.
pub fn build_consumption_order(circuit: &Circuit, demands: &[EpDemand], gate_of_demand: &[usize]) -> ConsumptionOrder {
    let gates = GateOrder::new(circuit, gate_of_demand);
    let keys: Vec<usize> =
        demands.iter().zip(gate_of_demand).flat_map(|(d, &g)| std::iter::repeat_n(g, d.multiplicity)).collect();
    ConsumptionOrder::from_gate_keys(&keys, &gates)
}
