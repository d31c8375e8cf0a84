//! One planning run: an allocated instance, an algorithm, and the resulting
//! EPs, trees, schedule and gate timeline.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::allocation::{allocate, allocation_cost, Allocation};
use crate::baseline::{disjoint_paths_execute, layer_gates};
use crate::catent::greedy_ce;
use crate::circuit::{build_circuit_graph, cnot_to_cz, Circuit, GateKind};
use crate::entanglement::{expand_demands, Ep, EpDemand, RouteTable, SwappingTree};
use crate::error::{Error, Result};
use crate::network::{build_network_coupling_graph, QuantumNetwork};
use crate::scheduling::{
    build_consumption_order, derive_ep_demands, dp_schedule, greedy_schedule, validate_schedule, ConsumptionOrder,
    DisjointLatency, LatencyOracle, Schedule, SharedLatency, ValidationReport,
};
use crate::{EpId, NodeId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Algorithm {
    #[serde(rename = "Greedy-TG")]
    GreedyTg,
    #[serde(rename = "DP-TG")]
    DpTg,
    #[serde(rename = "Greedy-CE")]
    GreedyCe,
    #[serde(rename = "DP-CE")]
    DpCe,
    #[serde(rename = "Disjoint-Paths")]
    DisjointPaths,
}

impl Algorithm {
    pub const ALL: [Algorithm; 5] =
        [Algorithm::GreedyTg, Algorithm::DpTg, Algorithm::GreedyCe, Algorithm::DpCe, Algorithm::DisjointPaths];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::GreedyTg => "Greedy-TG",
            Algorithm::DpTg => "DP-TG",
            Algorithm::GreedyCe => "Greedy-CE",
            Algorithm::DpCe => "DP-CE",
            Algorithm::DisjointPaths => "Disjoint-Paths",
        }
    }

    pub fn uses_ce(self) -> bool {
        matches!(self, Algorithm::GreedyCe | Algorithm::DpCe)
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Parse(format!("unknown algorithm {s:?}")))
    }
}

/// A circuit placed on a network.
#[derive(Debug, Clone)]
pub struct Instance {
    pub circuit: Circuit,
    pub network: QuantumNetwork,
    pub routes: RouteTable,
    pub allocation: Allocation,
    pub qubit_nodes: Vec<NodeId>,
    pub allocation_cost: f64,
}

impl Instance {
    pub fn new(circuit: Circuit, network: QuantumNetwork, allocation: Allocation) -> Result<Self> {
        let routes = RouteTable::build(&network)?;
        Self::with_routes(circuit, network, routes, allocation)
    }

    /// Places `circuit` with the QAP heuristic.
    pub fn allocate(circuit: Circuit, network: QuantumNetwork) -> Result<Self> {
        let routes = RouteTable::build(&network)?;
        let allocation = allocate(&circuit, &network, &routes)?;
        Self::with_routes(circuit, network, routes, allocation)
    }

    fn with_routes(
        circuit: Circuit,
        network: QuantumNetwork,
        routes: RouteTable,
        allocation: Allocation,
    ) -> Result<Self> {
        network.validate()?;
        if allocation.num_qubits() != circuit.num_qubits {
            return Err(Error::Contract(format!(
                "allocation places {} qubits, circuit has {}",
                allocation.num_qubits(),
                circuit.num_qubits
            )));
        }
        allocation.validate(network.num_memories())?;
        let cg = build_circuit_graph(&circuit);
        let ng = build_network_coupling_graph(&network, &routes)?;
        let allocation_cost = allocation_cost(&cg, &ng, &allocation)?;
        let qubit_nodes = allocation.nodes(&network);
        Ok(Instance { circuit, network, routes, allocation, qubit_nodes, allocation_cost })
    }

    pub fn tau(&self) -> f64 {
        self.network.params.tau
    }

    /// Execution time of each gate: one gate time, plus forward swaps that
    /// bring the operands of a local binary gate next to each other.
    pub fn gate_durations(&self, circuit: &Circuit) -> Result<Vec<f64>> {
        let p = &self.network.params;
        let mut local = vec![0usize; self.network.num_memories()];
        let mut dists = Vec::with_capacity(self.network.nodes.len());
        for node in &self.network.nodes {
            for (i, &m) in node.memories.iter().enumerate() {
                local[m] = i;
            }
            dists.push(node.coupling_distances()?);
        }
        Ok(circuit
            .gates
            .iter()
            .map(|g| match g.pair() {
                Some((a, b)) if self.qubit_nodes[a] == self.qubit_nodes[b] => {
                    let (ma, mb) = (self.allocation.eta[a], self.allocation.eta[b]);
                    let d = dists[self.qubit_nodes[a]][local[ma]][local[mb]];
                    p.t_gate + f64::from(d.saturating_sub(1)) * p.t_local_swap
                }
                _ => p.t_gate,
            })
            .collect())
    }
}

/// Batch latency oracle of a plan.
#[derive(Debug, Clone)]
pub enum PlanOracle {
    Shared(SharedLatency),
    Disjoint(DisjointLatency),
}

impl PlanOracle {
    fn inner(&self) -> &dyn LatencyOracle {
        match self {
            PlanOracle::Shared(o) => o,
            PlanOracle::Disjoint(o) => o,
        }
    }
}

impl LatencyOracle for PlanOracle {
    fn num_eps(&self) -> usize {
        self.inner().num_eps()
    }

    fn num_classes(&self) -> usize {
        self.inner().num_classes()
    }

    fn class_of(&self, ep: EpId) -> usize {
        self.inner().class_of(ep)
    }

    fn latency(&self, counts: &[u32]) -> f64 {
        self.inner().latency(counts)
    }
}

#[derive(Debug, Clone)]
pub struct Plan {
    pub algorithm: Algorithm,
    pub demands: Vec<EpDemand>,
    pub eps: Vec<Ep>,
    pub trees: Vec<SwappingTree>,
    /// Index into `trees` of each EP's swapping tree.
    pub ep_tree: Vec<usize>,
    pub order: ConsumptionOrder,
    pub oracle: PlanOracle,
    pub schedule: Schedule,
    /// Critical path of the gates that become executable with each batch.
    pub segments: Vec<f64>,
    pub num_remote_gates: usize,
    pub num_ces: Option<usize>,
    pub tau: f64,
}

impl Plan {
    pub fn validate(&self) -> ValidationReport {
        validate_schedule(&self.schedule, &self.order, self.tau, &self.oracle)
    }

    pub fn tree_of(&self, ep: EpId) -> &SwappingTree {
        &self.trees[self.ep_tree[ep]]
    }

    pub fn analytic_total(&self) -> f64 {
        self.schedule.total_latency
    }
}

/// First expanded EP of each demand, plus the total as the last entry.
fn ep_offsets(demands: &[EpDemand]) -> Vec<usize> {
    let mut out = Vec::with_capacity(demands.len() + 1);
    out.push(0);
    for d in demands {
        out.push(out.last().unwrap() + d.multiplicity);
    }
    out
}

/// Per batch, the critical path of its gates. A gate belongs to the latest
/// batch among its EPs and its qubits' previous gates; gates without either
/// belong to the first batch.
pub fn gate_segments(
    gate_eps: &[Vec<EpId>],
    ep_batch: &[usize],
    operands: &[Vec<usize>],
    durations: &[f64],
    num_qubits: usize,
    num_batches: usize,
) -> Vec<f64> {
    let mut segments = vec![0.0f64; num_batches.max(1)];
    // Per qubit: segment and in-segment finish time of its last gate.
    let mut last: Vec<(usize, f64)> = vec![(0, 0.0); num_qubits];
    for (g, qs) in operands.iter().enumerate() {
        let seg = gate_eps[g].iter().map(|&e| ep_batch[e]).chain(qs.iter().map(|&q| last[q].0)).max().unwrap_or(0);
        let start = qs.iter().filter(|&&q| last[q].0 == seg).map(|&q| last[q].1).fold(0.0, f64::max);
        let end = start + durations[g];
        for &q in qs {
            last[q] = (seg, end);
        }
        segments[seg] = segments[seg].max(end);
    }
    segments
}

/// Plans `algorithm` on `instance`. CE algorithms run on the CZ form of the
/// circuit.
pub fn plan(instance: &Instance, algorithm: Algorithm) -> Result<Plan> {
    let tau = instance.tau();
    let net = &instance.network;
    let converted;
    let circuit = if algorithm.uses_ce() && instance.circuit.gates.iter().any(|g| g.kind == GateKind::Cnot) {
        converted = cnot_to_cz(&instance.circuit);
        &converted
    } else {
        &instance.circuit
    };
    let mut gate_eps: Vec<Vec<EpId>> = vec![Vec::new(); circuit.gates.len()];

    let (demands, order, num_remote_gates, num_ces) = if algorithm.uses_ce() {
        let ce = greedy_ce(circuit, &instance.qubit_nodes, net, &instance.routes)?;
        let off = ep_offsets(&ce.demands);
        for (i, p) in ce.ces.iter().enumerate() {
            for &g in &p.gates {
                gate_eps[g].extend(off[i]..off[i + 1]);
            }
        }
        let n = ce.ces.len();
        (ce.demands, ce.order, ce.num_remote_gates, Some(n))
    } else {
        let td = derive_ep_demands(circuit, &instance.qubit_nodes, &instance.routes, net.params.hops_per_copy);
        let off = ep_offsets(&td.demands);
        let mut gates = Vec::with_capacity(td.demands.len());
        for (g, d) in td.gate_demand.iter().enumerate() {
            if let Some(d) = *d {
                gate_eps[g].extend(off[d]..off[d + 1]);
                gates.push(g);
            }
        }
        let order = build_consumption_order(circuit, &td.demands, &gates);
        if algorithm == Algorithm::DisjointPaths {
            let run =
                disjoint_paths_execute(&layer_gates(circuit, &instance.qubit_nodes), &td, net, &instance.routes, tau)?;
            let schedule = run.schedule();
            let ep_tree = (0..run.eps.len()).collect();
            let oracle = PlanOracle::Disjoint(run.oracle());
            return finish(
                instance,
                circuit,
                &gate_eps,
                Plan {
                    algorithm,
                    demands: td.demands,
                    eps: run.eps,
                    trees: run.trees,
                    ep_tree,
                    order,
                    oracle,
                    schedule,
                    segments: Vec::new(),
                    num_remote_gates: gates.len(),
                    num_ces: None,
                    tau,
                },
            );
        }
        let n = gates.len();
        (td.demands, order, n, None)
    };

    let eps = expand_demands(&demands);
    let pairs: Vec<(NodeId, NodeId)> = eps.iter().map(|e| (e.src, e.dst)).collect();
    let shared = SharedLatency::new(&instance.routes, &pairs)?;
    let schedule = match algorithm {
        Algorithm::GreedyTg | Algorithm::GreedyCe => greedy_schedule(&order, tau, &shared)?,
        _ => dp_schedule(&order, tau, &shared)?,
    };
    let trees = (0..shared.num_classes()).map(|c| shared.model().tree(c).clone()).collect();
    let ep_tree = (0..eps.len()).map(|e| shared.class_of(e)).collect();
    finish(
        instance,
        circuit,
        &gate_eps,
        Plan {
            algorithm,
            demands,
            eps,
            trees,
            ep_tree,
            order,
            oracle: PlanOracle::Shared(shared),
            schedule,
            segments: Vec::new(),
            num_remote_gates,
            num_ces,
            tau,
        },
    )
}

fn finish(instance: &Instance, circuit: &Circuit, gate_eps: &[Vec<EpId>], mut plan: Plan) -> Result<Plan> {
    let mut ep_batch = vec![usize::MAX; plan.eps.len()];
    for (b, batch) in plan.schedule.batches.iter().enumerate() {
        for &e in &batch.eps {
            ep_batch[e] = b;
        }
    }
    if let Some(e) = ep_batch.iter().position(|&b| b == usize::MAX) {
        return Err(Error::Plan(format!("EP {e} is in no batch")));
    }
    let operands: Vec<Vec<usize>> = circuit.gates.iter().map(|g| g.operands.clone()).collect();
    let durations = instance.gate_durations(circuit)?;
    plan.segments =
        gate_segments(gate_eps, &ep_batch, &operands, &durations, circuit.num_qubits, plan.schedule.batches.len());
    Ok(plan)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::{generate_random_circuit, BinaryKind, RandomCircuitParams};
    use crate::network::{generate_waxman, NetworkParams, WaxmanParams};
    use crate::testutil::{example_circuit, example_network, EXAMPLE_ETA};

    fn small(seed: u64, kind: BinaryKind) -> Instance {
        let p = RandomCircuitParams { num_qubits: 16, gates_per_qubit: 12, binary_kind: kind, ..Default::default() };
        let c = generate_random_circuit(&p, seed).unwrap();
        let wp = WaxmanParams { num_nodes: 5, total_data_memories: 16, ..Default::default() };
        let net = generate_waxman(&wp, NetworkParams::default(), seed).unwrap();
        Instance::allocate(c, net).unwrap()
    }

    #[test]
    fn algorithm_names_round_trip() {
        for a in Algorithm::ALL {
            assert_eq!(a.name().parse::<Algorithm>().unwrap(), a);
            let json = serde_json::to_string(&a).unwrap();
            assert_eq!(json, format!("\"{}\"", a.name()));
        }
        assert_eq!("dp-ce".parse::<Algorithm>().unwrap(), Algorithm::DpCe);
        assert!("Greedy".parse::<Algorithm>().is_err());
    }

    #[test]
    fn every_algorithm_plans_validly() {
        for seed in 0..4 {
            for kind in [BinaryKind::Cnot, BinaryKind::Cz] {
                let inst = small(seed, kind);
                for a in Algorithm::ALL {
                    let p = plan(&inst, a).unwrap();
                    let report = p.validate();
                    assert!(report.is_valid(), "{a} seed {seed}: {:?}", report.violations);
                    assert_eq!(p.schedule.num_eps(), p.eps.len());
                    assert_eq!(p.segments.len(), p.schedule.batches.len().max(1));
                    assert_eq!(p.num_ces.is_some(), a.uses_ce());
                }
            }
        }
    }

    #[test]
    fn telegate_eps_cover_remote_gates_with_copies() {
        let inst = small(3, BinaryKind::Cnot);
        let p = plan(&inst, Algorithm::DpTg).unwrap();
        assert_eq!(p.demands.len(), p.num_remote_gates);
        assert!(p.eps.len() >= p.num_remote_gates);
        let b = plan(&inst, Algorithm::DisjointPaths).unwrap();
        assert_eq!(b.eps, p.eps);
    }

    #[test]
    fn example_durations_charge_forward_swaps() {
        let inst =
            Instance::new(example_circuit(), example_network(), Allocation { eta: EXAMPLE_ETA.to_vec() }).unwrap();
        let d = inst.gate_durations(&inst.circuit).unwrap();
        let t = inst.network.params.t_gate;
        // Gate 1 is the local CNOT between memories 2 and 3 of node C.
        assert_eq!(d[0], t);
        assert_eq!(d[1], t);
    }

    #[test]
    fn segments_follow_batches_and_qubit_chains() {
        // Gates: 0 remote (EP 0, batch 1), 1 local on q0 after it, 2 unary on q2.
        let gate_eps = vec![vec![0], vec![], vec![]];
        let operands = vec![vec![0, 1], vec![0, 3], vec![2]];
        let seg = gate_segments(&gate_eps, &[1], &operands, &[1.0, 2.0, 0.5], 4, 2);
        assert_eq!(seg, vec![0.5, 3.0]);
    }

    #[test]
    fn segments_without_batches() {
        let seg = gate_segments(&[vec![], vec![]], &[], &[vec![0], vec![0]], &[1.0, 1.0], 1, 0);
        assert_eq!(seg, vec![2.0]);
    }
}
