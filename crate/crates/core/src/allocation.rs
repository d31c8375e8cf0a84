//! Static qubit allocation: maps circuit qubits onto network memories so as
//! to minimize Σ w(q_i, q_j) · w'(η(q_i), η(q_j)).
//!
//! The heuristic pads the circuit graph with dummy qubits, complements the
//! weights into a max-QAP instance, seeds an assignment by pairing heavy
//! matchings of both graphs, and then descends on the original cost with
//! best-improvement transpositions. A second, constructive seed is descended
//! the same way and the cheaper result is kept.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::circuit::{build_circuit_graph, Circuit, CircuitGraph};
use crate::entanglement::RouteTable;
use crate::error::{Error, Result};
use crate::network::{build_network_coupling_graph, NetworkCouplingGraph, QuantumNetwork};
use crate::{MemoryId, NodeId, QubitId};

/// Default size limit for exhaustive allocation.
pub const EXACT_LIMIT: usize = 8;

/// One-to-one map from circuit qubits to memories; `eta[q]` hosts qubit `q`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Allocation {
    pub eta: Vec<MemoryId>,
}

/// Row of the allocation file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Placement {
    pub qubit: QubitId,
    pub node: NodeId,
    pub memory: MemoryId,
}

impl Allocation {
    pub fn num_qubits(&self) -> usize {
        self.eta.len()
    }

    pub fn validate(&self, num_memories: usize) -> Result<()> {
        let mut used = vec![false; num_memories];
        for (q, &m) in self.eta.iter().enumerate() {
            if m >= num_memories {
                return Err(Error::Contract(format!("qubit {q} mapped to unknown memory {m}")));
            }
            if std::mem::replace(&mut used[m], true) {
                return Err(Error::Contract(format!("memory {m} hosts more than one qubit")));
            }
        }
        Ok(())
    }

    /// Hosting node of every qubit.
    pub fn nodes(&self, network: &QuantumNetwork) -> Vec<NodeId> {
        let hosts = network.memory_hosts();
        self.eta.iter().map(|&m| hosts[m]).collect()
    }

    pub fn placements(&self, network: &QuantumNetwork) -> Vec<Placement> {
        let hosts = network.memory_hosts();
        self.eta.iter().enumerate().map(|(qubit, &memory)| Placement { qubit, node: hosts[memory], memory }).collect()
    }

    pub fn from_placements(mut rows: Vec<Placement>) -> Result<Self> {
        rows.sort_by_key(|p| p.qubit);
        if rows.iter().enumerate().any(|(i, p)| p.qubit != i) {
            return Err(Error::Parse("allocation must list qubits 0..n exactly once".into()));
        }
        Ok(Allocation { eta: rows.into_iter().map(|p| p.memory).collect() })
    }
}

/// Mapping cost of `eta`.
pub fn allocation_cost(cg: &CircuitGraph, ng: &NetworkCouplingGraph, alloc: &Allocation) -> Result<f64> {
    if alloc.num_qubits() != cg.num_nodes() {
        return Err(Error::Contract(format!(
            "allocation covers {} qubits, circuit has {}",
            alloc.num_qubits(),
            cg.num_nodes()
        )));
    }
    alloc.validate(ng.num_nodes())?;
    Ok(cg.edges().map(|(a, b, w)| w as f64 * ng.weight(alloc.eta[a], alloc.eta[b])).sum())
}

/// Padded, complemented max-QAP instance. Qubits `num_qubits..n` are dummies.
#[derive(Debug, Clone, PartialEq)]
pub struct QapInstance {
    pub n: usize,
    pub num_qubits: usize,
    /// Complemented circuit weights, row-major `n × n`; zero on the diagonal
    /// and on every dummy-incident pair.
    pub flow: Vec<f64>,
    /// Coupling-graph weights, row-major `n × n`.
    pub dist: Vec<f64>,
    pub big_m: f64,
}

impl QapInstance {
    /// Complemented objective Σ_{u<v} flow(u,v) · dist(π u, π v).
    pub fn objective(&self, perm: &[MemoryId]) -> f64 {
        let n = self.n;
        let mut total = 0.0;
        for u in 0..n {
            for v in u + 1..n {
                total += self.flow[u * n + v] * self.dist[perm[u] * n + perm[v]];
            }
        }
        total
    }
}

pub fn pad_and_complement(cg: &CircuitGraph, ng: &NetworkCouplingGraph) -> Result<QapInstance> {
    let (nq, n) = (cg.num_nodes(), ng.num_nodes());
    if nq > n {
        return Err(Error::Capacity { qubits: nq, memories: n });
    }
    let big_m = cg.total_weight() as f64;
    let mut flow = vec![0.0; n * n];
    for a in 0..nq {
        for b in 0..nq {
            if a != b {
                flow[a * n + b] = big_m - cg.weight(a, b) as f64;
            }
        }
    }
    let dist = (0..n * n).map(|i| ng.weight(i / n, i % n)).collect();
    Ok(QapInstance { n, num_qubits: nq, flow, dist, big_m })
}

/// Greedy matching on a symmetric `n × n` weight matrix, heaviest pair
/// first, lowest indices on ties.
fn greedy_matching(n: usize, weight: impl Fn(usize, usize) -> f64) -> Vec<(usize, usize)> {
    let mut pairs: Vec<(f64, usize, usize)> =
        (0..n).flat_map(|a| (a + 1..n).map(move |b| (a, b))).map(|(a, b)| (weight(a, b), a, b)).collect();
    pairs.sort_by(|x, y| y.0.total_cmp(&x.0).then(x.1.cmp(&y.1)).then(x.2.cmp(&y.2)));
    let mut used = vec![false; n];
    let mut out = Vec::with_capacity(n / 2);
    for (_, a, b) in pairs {
        if !used[a] && !used[b] {
            used[a] = true;
            used[b] = true;
            out.push((a, b));
        }
    }
    out
}

/// Seed permutation: the i-th heaviest flow pair is placed on the i-th
/// heaviest distance pair; unmatched elements fill remaining slots in order.
fn matching_seed(inst: &QapInstance) -> Vec<MemoryId> {
    let n = inst.n;
    let fm = greedy_matching(n, |a, b| inst.flow[a * n + b]);
    let dm = greedy_matching(n, |a, b| inst.dist[a * n + b]);
    let mut perm = vec![usize::MAX; n];
    let mut taken = vec![false; n];
    for (&(u, v), &(a, b)) in fm.iter().zip(&dm) {
        perm[u] = a;
        perm[v] = b;
        taken[a] = true;
        taken[b] = true;
    }
    let mut free = (0..n).filter(|&m| !taken[m]);
    for p in perm.iter_mut().filter(|p| **p == usize::MAX) {
        *p = free.next().expect("slot per element");
    }
    perm
}

/// Constructive seed: start from the memory whose `num_qubits - 1` nearest
/// memories are closest in total, then repeatedly place the unplaced qubit
/// most strongly tied to the placed ones on the free memory adding the least
/// cost. Keeps interacting qubits together when memories outnumber qubits,
/// which the matching seed does not see (dummy flows are zero).
fn constructive_seed(model: &CostModel, num_qubits: usize) -> Vec<MemoryId> {
    let n = model.n;
    let mut perm = vec![usize::MAX; n];
    let mut free = vec![true; n];
    if num_qubits == 0 {
        return (0..n).collect();
    }
    let compactness = |m: usize| {
        let mut ds: Vec<f64> = (0..n).filter(|&o| o != m).map(|o| model.d[m * n + o]).collect();
        ds.sort_by(f64::total_cmp);
        ds[..num_qubits - 1].iter().sum::<f64>()
    };
    let start = (0..n).map(|m| (compactness(m), m)).min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1))).unwrap().1;
    let strength = |q: usize| (0..num_qubits).map(|o| model.w[q * n + o]).sum::<f64>();
    let first =
        (0..num_qubits).map(|q| (strength(q), q)).max_by(|a, b| a.0.total_cmp(&b.0).then(b.1.cmp(&a.1))).unwrap().1;
    perm[first] = start;
    free[start] = false;
    let mut placed = vec![first];
    for _ in 1..num_qubits {
        let tie = |q: usize| placed.iter().map(|&p| model.w[q * n + p]).sum::<f64>();
        let q = (0..num_qubits)
            .filter(|&q| perm[q] == usize::MAX)
            .map(|q| (tie(q), strength(q), q))
            .max_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)).then(b.2.cmp(&a.2)))
            .unwrap()
            .2;
        let added = |m: usize| placed.iter().map(|&p| model.w[q * n + p] * model.d[m * n + perm[p]]).sum::<f64>();
        let m = (0..n)
            .filter(|&m| free[m])
            .map(|m| (added(m), m))
            .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
            .unwrap()
            .1;
        perm[q] = m;
        free[m] = false;
        placed.push(q);
    }
    let mut rest = (0..n).filter(|&m| free[m]);
    for p in perm.iter_mut().filter(|p| **p == usize::MAX) {
        *p = rest.next().expect("slot per element");
    }
    perm
}

/// Original-cost matrices over the padded index space.
struct CostModel {
    n: usize,
    w: Vec<f64>,
    d: Vec<f64>,
}

impl CostModel {
    fn new(cg: &CircuitGraph, inst: &QapInstance) -> Self {
        let n = inst.n;
        let mut w = vec![0.0; n * n];
        for (a, b, x) in cg.edges() {
            w[a * n + b] = x as f64;
            w[b * n + a] = x as f64;
        }
        CostModel { n, w, d: inst.dist.clone() }
    }

    fn cost(&self, perm: &[MemoryId]) -> f64 {
        let n = self.n;
        (0..n)
            .flat_map(|u| (u + 1..n).map(move |v| (u, v)))
            .map(|(u, v)| self.w[u * n + v] * self.d[perm[u] * n + perm[v]])
            .sum()
    }

    /// Cost change of exchanging the memories of `i` and `j`.
    fn swap_delta(&self, perm: &[MemoryId], i: usize, j: usize) -> f64 {
        let n = self.n;
        let (pi, pj) = (perm[i], perm[j]);
        let (wi, wj) = (&self.w[i * n..(i + 1) * n], &self.w[j * n..(j + 1) * n]);
        let mut delta = 0.0;
        for k in 0..n {
            if k == i || k == j {
                continue;
            }
            let dw = wi[k] - wj[k];
            if dw != 0.0 {
                let pk = perm[k];
                delta += dw * (self.d[pj * n + pk] - self.d[pi * n + pk]);
            }
        }
        delta
    }

    /// Best-improvement transposition descent; ends 2-swap-stable.
    fn descend(&self, perm: &mut [MemoryId], movable: usize) {
        let n = self.n;
        loop {
            let mut best = (0.0, 0, 0);
            for i in 0..movable {
                for j in i + 1..n {
                    let d = self.swap_delta(perm, i, j);
                    if d < best.0 - 1e-12 * d.abs().max(1e-300) {
                        best = (d, i, j);
                    }
                }
            }
            if best.0 >= 0.0 {
                return;
            }
            perm.swap(best.1, best.2);
        }
    }
}

/// Heuristic allocation from the two weighted graphs.
pub fn allocate_graphs(cg: &CircuitGraph, ng: &NetworkCouplingGraph) -> Result<Allocation> {
    let inst = pad_and_complement(cg, ng)?;
    let model = CostModel::new(cg, &inst);
    // Descend from both seeds; the matching seed wins ties.
    let mut best: Option<(f64, Vec<MemoryId>)> = None;
    for mut perm in [matching_seed(&inst), constructive_seed(&model, inst.num_qubits)] {
        // Dummy-dummy exchanges never change the cost; only real qubits move.
        model.descend(&mut perm, inst.num_qubits);
        let c = model.cost(&perm);
        if best.as_ref().is_none_or(|b| c < b.0) {
            best = Some((c, perm));
        }
    }
    let perm = best.expect("two seeds").1;
    Ok(Allocation { eta: perm[..inst.num_qubits].to_vec() })
}

pub fn allocate(circuit: &Circuit, network: &QuantumNetwork, routes: &RouteTable) -> Result<Allocation> {
    let cg = build_circuit_graph(circuit);
    let ng = build_network_coupling_graph(network, routes)?;
    allocate_graphs(&cg, &ng)
}

/// Exhaustive minimum-cost allocation over graphs with at most `limit` memories.
pub fn allocate_exact_graphs(cg: &CircuitGraph, ng: &NetworkCouplingGraph, limit: usize) -> Result<Allocation> {
    let inst = pad_and_complement(cg, ng)?;
    if inst.n > limit {
        return Err(Error::TooLarge { size: inst.n, limit });
    }
    let model = CostModel::new(cg, &inst);
    let mut perm: Vec<MemoryId> = (0..inst.n).collect();
    let mut best = (model.cost(&perm), perm.clone());
    // Heap's algorithm over all n! permutations.
    let mut c = vec![0usize; inst.n];
    let mut i = 0;
    while i < inst.n {
        if c[i] < i {
            perm.swap(if i % 2 == 0 { 0 } else { c[i] }, i);
            let cost = model.cost(&perm);
            if cost < best.0 {
                best = (cost, perm.clone());
            }
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    Ok(Allocation { eta: best.1[..inst.num_qubits].to_vec() })
}

pub fn allocate_exact(
    circuit: &Circuit,
    network: &QuantumNetwork,
    routes: &RouteTable,
    limit: usize,
) -> Result<Allocation> {
    let cg = build_circuit_graph(circuit);
    let ng = build_network_coupling_graph(network, routes)?;
    allocate_exact_graphs(&cg, &ng, limit)
}

/// Uniformly random injective allocation.
pub fn random_allocation(num_qubits: usize, num_memories: usize, seed: u64) -> Result<Allocation> {
    if num_qubits > num_memories {
        return Err(Error::Capacity { qubits: num_qubits, memories: num_memories });
    }
    let mut mems: Vec<MemoryId> = (0..num_memories).collect();
    mems.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    mems.truncate(num_qubits);
    Ok(Allocation { eta: mems })
}
