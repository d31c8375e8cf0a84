//! Layered disjoint-path baseline: remote gates are layered into time
//! slots, and each slot's EPs are generated along pairwise edge-disjoint
//! paths, one path per EP, in rounds.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::catent::remote_gates;
use crate::circuit::Circuit;
use crate::entanglement::{expand_demands, Ep, RouteTable, SwappingTree};
use crate::error::{Error, Result};
use crate::network::QuantumNetwork;
use crate::scheduling::{Batch, DisjointLatency, Schedule, TelegateDemands};
use crate::{EpId, NodeId};

/// Remote gates executed in one time slot; no two share a qubit.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GateLayer {
    pub slot: usize,
    pub gates: Vec<usize>,
}

/// Each remote gate goes to the slot after the latest slot of an earlier
/// remote gate on one of its qubits.
pub fn layer_gates(circuit: &Circuit, qubit_nodes: &[NodeId]) -> Vec<GateLayer> {
    let mut next_free = vec![0usize; circuit.num_qubits];
    let mut layers: Vec<GateLayer> = Vec::new();
    for g in remote_gates(circuit, qubit_nodes) {
        let (a, b) = circuit.gates[g].pair().expect("remote gates are binary");
        let slot = next_free[a].max(next_free[b]);
        next_free[a] = slot + 1;
        next_free[b] = slot + 1;
        if slot == layers.len() {
            layers.push(GateLayer { slot, gates: Vec::new() });
        }
        layers[slot].gates.push(g);
    }
    layers
}

/// One extraction round: EPs routed together on edge-disjoint paths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Round {
    pub layer: usize,
    pub eps: Vec<EpId>,
    pub paths: Vec<Vec<NodeId>>,
    pub latency: f64,
}

#[derive(Debug, Clone)]
pub struct BaselineRun {
    pub eps: Vec<Ep>,
    pub rounds: Vec<Round>,
    /// Tree of each EP along its routed path.
    pub trees: Vec<SwappingTree>,
    /// Independent latency of each EP along its routed path.
    pub latencies: Vec<f64>,
    pub total_latency: f64,
}

impl BaselineRun {
    /// Rounds as batches, priced without sharing.
    pub fn schedule(&self) -> Schedule {
        Schedule::new(self.rounds.iter().map(|r| Batch { eps: r.eps.clone(), latency: r.latency }).collect())
    }

    pub fn oracle(&self) -> DisjointLatency {
        DisjointLatency { latencies: self.latencies.clone() }
    }
}

/// Shortest path from `src` to `dst` over links not in `used`; neighbors are
/// explored in ascending node order.
fn residual_path(adj: &[Vec<(NodeId, usize)>], used: &[bool], src: NodeId, dst: NodeId) -> Option<Vec<NodeId>> {
    let mut prev = vec![usize::MAX; adj.len()];
    prev[src] = src;
    let mut queue = VecDeque::from([src]);
    while let Some(u) = queue.pop_front() {
        if u == dst {
            let mut path = vec![dst];
            while *path.last().unwrap() != src {
                path.push(prev[*path.last().unwrap()]);
            }
            path.reverse();
            return Some(path);
        }
        for &(v, l) in &adj[u] {
            if !used[l] && prev[v] == usize::MAX {
                prev[v] = u;
                queue.push_back(v);
            }
        }
    }
    None
}

/// Generates the EPs of each layer in rounds of edge-disjoint paths,
/// shortest full-graph distance first (lowest EP id on ties). An EP takes
/// its routed tree when all of its links are free, otherwise the shortest
/// residual path; a path whose tree exceeds `tau` waits for a later round.
pub fn disjoint_paths_execute(
    layers: &[GateLayer],
    demands: &TelegateDemands,
    network: &QuantumNetwork,
    routes: &RouteTable,
    tau: f64,
) -> Result<BaselineRun> {
    let eps = expand_demands(&demands.demands);
    let mut first_ep = Vec::with_capacity(demands.demands.len() + 1);
    first_ep.push(0);
    for d in &demands.demands {
        first_ep.push(first_ep.last().unwrap() + d.multiplicity);
    }
    let mut adj = network.adjacency();
    for row in &mut adj {
        row.sort_unstable();
    }
    let hops = network.hop_distances();
    let mut trees: Vec<Option<SwappingTree>> = vec![None; eps.len()];
    let mut latencies = vec![0.0; eps.len()];
    let mut rounds = Vec::new();
    for (li, layer) in layers.iter().enumerate() {
        let mut pending: Vec<EpId> = layer
            .gates
            .iter()
            .map(|&g| demands.gate_demand[g].ok_or_else(|| Error::Contract(format!("gate {g} has no EP demand"))))
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .flat_map(|d| first_ep[d]..first_ep[d + 1])
            .collect();
        pending.sort_by_key(|&e| (hops[eps[e].src][eps[e].dst], e));
        while !pending.is_empty() {
            let mut used = vec![false; network.links.len()];
            let mut round = Round { layer: li, eps: Vec::new(), paths: Vec::new(), latency: 0.0 };
            let mut deferred = Vec::new();
            for &e in &pending {
                let best = routes.oriented(eps[e].src, eps[e].dst);
                let routed = if best.leaves.iter().all(|l| !used[l.link]) {
                    Some((best.path.clone(), best))
                } else {
                    residual_path(&adj, &used, eps[e].src, eps[e].dst)
                        .map(|p| SwappingTree::balanced(network, &p).map(|t| (p, t)))
                        .transpose()?
                };
                match routed {
                    Some((path, tree)) if tree.latency() <= tau => {
                        for l in &tree.leaves {
                            used[l.link] = true;
                        }
                        latencies[e] = tree.latency();
                        round.latency = round.latency.max(latencies[e]);
                        trees[e] = Some(tree);
                        round.eps.push(e);
                        round.paths.push(path);
                    }
                    Some((_, tree)) if round.eps.is_empty() => {
                        return Err(Error::Infeasible { ep: e, latency: tree.latency(), tau });
                    }
                    None if round.eps.is_empty() => {
                        return Err(Error::Routing { src: eps[e].src, dst: eps[e].dst });
                    }
                    _ => deferred.push(e),
                }
            }
            pending = deferred;
            rounds.push(round);
        }
    }
    let trees = trees
        .into_iter()
        .enumerate()
        .map(|(e, t)| t.ok_or_else(|| Error::Contract(format!("EP {e} belongs to no layer"))))
        .collect::<Result<Vec<_>>>()?;
    let total_latency = rounds.iter().map(|r| r.latency).sum();
    Ok(BaselineRun { eps, rounds, trees, latencies, total_latency })
}
