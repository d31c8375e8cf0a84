//! Cat-entanglement selection for CZ circuits: candidate linked copies,
//! gate coverage, the densest-subgraph-with-vertex-costs instance and its
//! peeling solver, and the outer greedy cover loop.

use std::cmp::{Ordering, Reverse};
use std::collections::{BTreeMap, BTreeSet, BinaryHeap, HashMap};

use serde::{Deserialize, Serialize};

use crate::circuit::{Circuit, GateKind};
use crate::entanglement::{purification_copies, EpDemand, Origin, RouteTable};
use crate::error::{Error, Result};
use crate::network::QuantumNetwork;
use crate::scheduling::{ConsumptionOrder, GateOrder};
use crate::{NodeId, QubitId};

/// Open-ended validity.
pub const FOREVER: u64 = u64::MAX;

/// Network hops within which a third computer may host a pair of copies.
pub const THIRD_NODE_HOPS: u32 = 2;

/// A linked copy of `qubit` at `target_node`, usable for gates at instants
/// in `[time, valid_until)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CatEntanglement {
    pub qubit: QubitId,
    pub target_node: NodeId,
    pub time: u64,
    pub valid_until: u64,
    pub cost: f64,
}

impl CatEntanglement {
    pub fn is_live_at(&self, t: u64) -> bool {
        self.time <= t && t < self.valid_until
    }

    fn key(&self) -> (QubitId, u64, NodeId) {
        (self.qubit, self.time, self.target_node)
    }
}

/// A selected cat-entanglement with the gates it serves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlannedCe {
    pub ce: CatEntanglement,
    /// Circuit indices of the gates using this copy, ascending.
    pub gates: Vec<usize>,
}

/// Unary-free windows of every qubit.
struct Windows {
    unary_times: Vec<Vec<u64>>,
}

impl Windows {
    fn new(circuit: &Circuit) -> Self {
        let mut unary_times = vec![Vec::new(); circuit.num_qubits];
        for g in circuit.gates.iter().filter(|g| !g.is_binary()) {
            unary_times[g.operands[0]].push(g.time);
        }
        Windows { unary_times }
    }

    /// `[start, end)` of the window of `q` containing instant `t`.
    fn containing(&self, q: QubitId, t: u64) -> (u64, u64) {
        let u = &self.unary_times[q];
        let i = u.partition_point(|&x| x < t);
        let start = if i == 0 { 0 } else { u[i - 1] + 1 };
        (start, u.get(i).copied().unwrap_or(FOREVER))
    }
}

fn require_cz(circuit: &Circuit) -> Result<()> {
    match circuit.gates.iter().position(|g| g.kind == GateKind::Cnot) {
        Some(i) => Err(Error::Contract(format!("gate {i} is a CNOT; convert the circuit to CZ form first"))),
        None => Ok(()),
    }
}

/// Indices of gates whose operands sit on different nodes.
pub fn remote_gates(circuit: &Circuit, qubit_nodes: &[NodeId]) -> Vec<usize> {
    circuit
        .gates
        .iter()
        .enumerate()
        .filter_map(|(i, g)| g.pair().filter(|&(a, b)| qubit_nodes[a] != qubit_nodes[b]).map(|_| i))
        .collect()
}

/// Third computers allowed to host copies for a gate between `a` and `b`.
fn third_nodes(network: &QuantumNetwork, hops: &[Vec<u32>], a: NodeId, b: NodeId) -> Vec<NodeId> {
    (0..network.num_nodes())
        .filter(|&k| k != a && k != b)
        .filter(|&k| network.nodes[k].exec_memory_capacity >= 2)
        .filter(|&k| hops[a][k] <= THIRD_NODE_HOPS || hops[b][k] <= THIRD_NODE_HOPS)
        .collect()
}

/// Distinct candidate cat-entanglements for all remote gates, sorted by
/// (qubit, window start, target); the position is the candidate id.
pub fn enumerate_ce_candidates(
    circuit: &Circuit,
    qubit_nodes: &[NodeId],
    network: &QuantumNetwork,
    routes: &RouteTable,
) -> Result<Vec<CatEntanglement>> {
    require_cz(circuit)?;
    let windows = Windows::new(circuit);
    let hops = network.hop_distances();
    let mut keys = BTreeMap::new();
    for g in remote_gates(circuit, qubit_nodes) {
        let gate = &circuit.gates[g];
        let (a, b) = gate.pair().expect("remote gates are binary");
        let (na, nb) = (qubit_nodes[a], qubit_nodes[b]);
        let (wa, wb) = (windows.containing(a, gate.time), windows.containing(b, gate.time));
        keys.insert((a, wa.0, nb), wa.1);
        keys.insert((b, wb.0, na), wb.1);
        for k in third_nodes(network, &hops, na, nb) {
            keys.insert((a, wa.0, k), wa.1);
            keys.insert((b, wb.0, k), wb.1);
        }
    }
    Ok(keys
        .into_iter()
        .map(|((qubit, time, target_node), valid_until)| CatEntanglement {
            qubit,
            target_node,
            time,
            valid_until,
            cost: routes.ep_latency(qubit_nodes[qubit], target_node),
        })
        .collect())
}

/// Remote gates covered by `ces`: a copy of one operand at the other's node,
/// or copies of both at a common node, live at the gate's instant.
pub fn coverage(ces: &[CatEntanglement], circuit: &Circuit, qubit_nodes: &[NodeId]) -> BTreeSet<usize> {
    let mut at: HashMap<(QubitId, NodeId), Vec<&CatEntanglement>> = HashMap::new();
    for ce in ces {
        at.entry((ce.qubit, ce.target_node)).or_default().push(ce);
    }
    let live = |q: QubitId, n: NodeId, t: u64| at.get(&(q, n)).is_some_and(|v| v.iter().any(|c| c.is_live_at(t)));
    let mut nodes_of: HashMap<QubitId, BTreeSet<NodeId>> = HashMap::new();
    for ce in ces {
        nodes_of.entry(ce.qubit).or_default().insert(ce.target_node);
    }
    remote_gates(circuit, qubit_nodes)
        .into_iter()
        .filter(|&g| {
            let gate = &circuit.gates[g];
            let (a, b) = gate.pair().expect("binary");
            let t = gate.time;
            live(a, qubit_nodes[b], t)
                || live(b, qubit_nodes[a], t)
                || nodes_of.get(&a).is_some_and(|ns| ns.iter().any(|&k| live(a, k, t) && live(b, k, t)))
        })
        .collect()
}

/// Ways to cover one gate with candidates not yet selected.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CoverOptions {
    /// Candidates covering the gate alone (together with selected ones).
    pub singles: Vec<usize>,
    /// Candidate pairs covering it together, `a < b`.
    pub pairs: Vec<(usize, usize)>,
}

/// Vertex-weighted, vertex-costed graph over candidate ids.
#[derive(Debug, Clone, PartialEq)]
pub struct DsvcGraph {
    /// Candidate id of each vertex.
    pub vertices: Vec<usize>,
    pub weight: Vec<u64>,
    pub cost: Vec<f64>,
    /// `(u, v, w)` over vertex positions, `u < v`.
    pub edges: Vec<(usize, usize, u64)>,
}

impl DsvcGraph {
    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn total_weight(&self) -> u64 {
        self.weight.iter().sum::<u64>() + self.edges.iter().map(|e| e.2).sum::<u64>()
    }

    /// Density of the subgraph induced by vertex positions `subset`.
    pub fn density(&self, subset: &[usize]) -> f64 {
        let mut inside = vec![false; self.num_vertices()];
        for &v in subset {
            inside[v] = true;
        }
        let w: u64 = subset.iter().map(|&v| self.weight[v]).sum::<u64>()
            + self.edges.iter().filter(|e| inside[e.0] && inside[e.1]).map(|e| e.2).sum::<u64>();
        let c: f64 = subset.iter().map(|&v| self.cost[v]).sum();
        if c > 0.0 {
            w as f64 / c
        } else {
            0.0
        }
    }
}

/// DSVC instance for the given uncovered gates. Each gate contributes one
/// unit: to the single candidate with the best coverable-count per cost
/// (lowest id on ties) if it has one, else to its lexicographically
/// smallest pair.
pub fn build_dsvc_instance(options: &[CoverOptions], cost: &[f64]) -> Result<DsvcGraph> {
    let mut count: HashMap<usize, u64> = HashMap::new();
    for o in options {
        for &v in &o.singles {
            *count.entry(v).or_default() += 1;
        }
    }
    let mut vweight: BTreeMap<usize, u64> = BTreeMap::new();
    let mut eweight: BTreeMap<(usize, usize), u64> = BTreeMap::new();
    for (i, o) in options.iter().enumerate() {
        let ratio = |v: &usize| count[v] as f64 / cost[*v];
        if let Some(&v) = o.singles.iter().max_by(|a, b| ratio(a).total_cmp(&ratio(b)).then(b.cmp(a))) {
            *vweight.entry(v).or_default() += 1;
        } else if let Some(&p) = o.pairs.iter().min() {
            *eweight.entry(p).or_default() += 1;
        } else {
            return Err(Error::Contract(format!("uncovered gate #{i} has no covering option")));
        }
    }
    let ids: BTreeSet<usize> = vweight.keys().copied().chain(eweight.keys().flat_map(|&(a, b)| [a, b])).collect();
    let vertices: Vec<usize> = ids.into_iter().collect();
    let pos = |id: usize| vertices.binary_search(&id).expect("vertex present");
    let edges = eweight
        .iter()
        .map(|(&(a, b), &w)| {
            let (u, v) = (pos(a), pos(b));
            (u.min(v), u.max(v), w)
        })
        .collect();
    Ok(DsvcGraph {
        weight: vertices.iter().map(|v| vweight.get(v).copied().unwrap_or(0)).collect(),
        cost: vertices.iter().map(|&v| cost[v]).collect(),
        vertices,
        edges,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Ratio(f64);

impl Eq for Ratio {}

impl PartialOrd for Ratio {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Ratio {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0)
    }
}

/// Peeling: repeatedly drop the vertex with the lowest weighted degree per
/// cost (lowest position on ties) and return the densest intermediate
/// subgraph, as vertex positions.
pub fn dsvc_greedy(graph: &DsvcGraph) -> Vec<usize> {
    let n = graph.num_vertices();
    let mut adj: Vec<Vec<(usize, u64)>> = vec![Vec::new(); n];
    for &(u, v, w) in &graph.edges {
        adj[u].push((v, w));
        adj[v].push((u, w));
    }
    let mut degree: Vec<u64> = (0..n).map(|v| graph.weight[v] + adj[v].iter().map(|e| e.1).sum::<u64>()).collect();
    let mut alive = vec![true; n];
    let mut heap: BinaryHeap<Reverse<(Ratio, usize)>> =
        (0..n).map(|v| Reverse((Ratio(degree[v] as f64 / graph.cost[v]), v))).collect();
    let mut weight = graph.total_weight();
    let mut cost: f64 = graph.cost.iter().sum();
    let mut best = (if cost > 0.0 { weight as f64 / cost } else { 0.0 }, 0usize);
    let mut removed = Vec::with_capacity(n);
    while let Some(Reverse((Ratio(r), v))) = heap.pop() {
        if !alive[v] || r != degree[v] as f64 / graph.cost[v] {
            continue;
        }
        alive[v] = false;
        removed.push(v);
        weight -= degree[v];
        cost -= graph.cost[v];
        for &(u, w) in &adj[v] {
            if alive[u] {
                degree[u] -= w;
                heap.push(Reverse((Ratio(degree[u] as f64 / graph.cost[u]), u)));
            }
        }
        if removed.len() < n {
            let density = weight as f64 / cost;
            if density > best.0 {
                best = (density, removed.len());
            }
        }
    }
    let mut keep = vec![true; n];
    for &v in &removed[..best.1] {
        keep[v] = false;
    }
    (0..n).filter(|&v| keep[v]).collect()
}

/// Selected cat-entanglements and the EPs they need.
#[derive(Debug, Clone)]
pub struct CePlan {
    pub ces: Vec<PlannedCe>,
    pub demands: Vec<EpDemand>,
    /// Order over the expanded EPs of `demands`.
    pub order: ConsumptionOrder,
    pub num_remote_gates: usize,
}

/// Per remote gate, the candidates usable for it.
struct CoverIndex {
    gates: Vec<usize>,
    direct: Vec<[usize; 2]>,
    /// Per gate: pairs of candidates at a common third node.
    third: Vec<Vec<(usize, usize)>>,
}

impl CoverIndex {
    fn new(circuit: &Circuit, qubit_nodes: &[NodeId], network: &QuantumNetwork, cands: &[CatEntanglement]) -> Self {
        let windows = Windows::new(circuit);
        let hops = network.hop_distances();
        let id: HashMap<(QubitId, u64, NodeId), usize> = cands.iter().enumerate().map(|(i, c)| (c.key(), i)).collect();
        let gates = remote_gates(circuit, qubit_nodes);
        let mut direct = Vec::with_capacity(gates.len());
        let mut third = Vec::with_capacity(gates.len());
        for &g in &gates {
            let gate = &circuit.gates[g];
            let (a, b) = gate.pair().expect("binary");
            let (na, nb) = (qubit_nodes[a], qubit_nodes[b]);
            let (sa, sb) = (windows.containing(a, gate.time).0, windows.containing(b, gate.time).0);
            direct.push([id[&(a, sa, nb)], id[&(b, sb, na)]]);
            third.push(
                third_nodes(network, &hops, na, nb)
                    .into_iter()
                    .map(|k| {
                        let (x, y) = (id[&(a, sa, k)], id[&(b, sb, k)]);
                        (x.min(y), x.max(y))
                    })
                    .collect(),
            );
        }
        CoverIndex { gates, direct, third }
    }

    fn is_covered(&self, i: usize, selected: &[bool]) -> bool {
        self.direct[i].iter().any(|&c| selected[c]) || self.third[i].iter().any(|&(x, y)| selected[x] && selected[y])
    }

    fn options(&self, i: usize, selected: &[bool]) -> CoverOptions {
        let mut singles: Vec<usize> = self.direct[i].to_vec();
        let mut pairs = Vec::new();
        for &(x, y) in &self.third[i] {
            match (selected[x], selected[y]) {
                (false, false) => pairs.push((x, y)),
                (true, false) => singles.push(y),
                (false, true) => singles.push(x),
                (true, true) => {}
            }
        }
        singles.sort_unstable();
        singles.dedup();
        CoverOptions { singles, pairs }
    }

    /// Gates served by candidate `c` under the final selection.
    fn users(&self, selected: &[bool]) -> Vec<Vec<usize>> {
        let mut users = vec![Vec::new(); selected.len()];
        for (i, &g) in self.gates.iter().enumerate() {
            if let Some(&c) = self.direct[i].iter().filter(|&&c| selected[c]).min() {
                users[c].push(g);
            } else if let Some(&(x, y)) = self.third[i].iter().filter(|&&(x, y)| selected[x] && selected[y]).min() {
                users[x].push(g);
                users[y].push(g);
            }
        }
        users
    }
}

/// Splits copies until no node holds more live copies than its execution
/// memory. A copy is live from its first to its last served gate.
fn split_overflow(ces: &mut Vec<PlannedCe>, circuit: &Circuit, network: &QuantumNetwork) -> Result<()> {
    let time = |g: usize| circuit.gates[g].time;
    loop {
        let mut events: BTreeMap<(NodeId, u64), i64> = BTreeMap::new();
        for p in ces.iter() {
            let (first, last) = (time(p.gates[0]), time(*p.gates.last().expect("served gates")));
            *events.entry((p.ce.target_node, first)).or_default() += 1;
            *events.entry((p.ce.target_node, last.saturating_add(1))).or_default() -= 1;
        }
        let mut overflow = None;
        let mut node = usize::MAX;
        let mut live = 0i64;
        for (&(n, t), &d) in &events {
            if n != node {
                node = n;
                live = 0;
            }
            live += d;
            if live > network.nodes[n].exec_memory_capacity as i64 {
                overflow = Some((n, t));
                break;
            }
        }
        let Some((n, t)) = overflow else { return Ok(()) };
        let victim = ces
            .iter()
            .enumerate()
            .filter(|(_, p)| p.ce.target_node == n && time(p.gates[0]) < t && time(*p.gates.last().unwrap()) > t)
            .filter(|(_, p)| !p.gates.iter().any(|&g| time(g) == t))
            .max_by_key(|(i, p)| (time(*p.gates.last().unwrap()) - time(p.gates[0]), Reverse(*i)))
            .map(|(i, _)| i)
            .ok_or_else(|| Error::Model(format!("node {n} lacks execution memory at instant {t}")))?;
        let p = &mut ces[victim];
        let cut = p.gates.partition_point(|&g| time(g) < t);
        let mut second = p.clone();
        second.gates = p.gates.split_off(cut);
        second.ce.time = time(second.gates[0]);
        p.ce.valid_until = t;
        ces.push(second);
    }
}

/// Greedy cover of all remote gates by cat-entanglements, then the EP
/// demands and their consumption order.
pub fn greedy_ce(
    circuit: &Circuit,
    qubit_nodes: &[NodeId],
    network: &QuantumNetwork,
    routes: &RouteTable,
) -> Result<CePlan> {
    let cands = enumerate_ce_candidates(circuit, qubit_nodes, network, routes)?;
    let index = CoverIndex::new(circuit, qubit_nodes, network, &cands);
    let cost: Vec<f64> = cands.iter().map(|c| c.cost).collect();
    let mut selected = vec![false; cands.len()];
    let mut uncovered: Vec<usize> = (0..index.gates.len()).collect();
    while !uncovered.is_empty() {
        let options: Vec<CoverOptions> = uncovered.iter().map(|&i| index.options(i, &selected)).collect();
        let graph = build_dsvc_instance(&options, &cost)?;
        for v in dsvc_greedy(&graph) {
            selected[graph.vertices[v]] = true;
        }
        let before = uncovered.len();
        uncovered.retain(|&i| !index.is_covered(i, &selected));
        if uncovered.len() == before {
            return Err(Error::Contract("cat-entanglement selection made no progress".into()));
        }
    }
    let users = index.users(&selected);
    let mut ces: Vec<PlannedCe> = (0..cands.len())
        .filter(|&c| !users[c].is_empty())
        .map(|c| PlannedCe { ce: cands[c].clone(), gates: users[c].clone() })
        .collect();
    split_overflow(&mut ces, circuit, network)?;
    ces.sort_by(|a, b| a.gates[0].cmp(&b.gates[0]).then(a.ce.key().cmp(&b.ce.key())));

    let demands: Vec<EpDemand> = ces
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let src = qubit_nodes[p.ce.qubit];
            EpDemand {
                src,
                dst: p.ce.target_node,
                multiplicity: purification_copies(routes.hops(src, p.ce.target_node), network.params.hops_per_copy),
                origin: Origin::Ce(i),
            }
        })
        .collect();
    let gate_order = GateOrder::new(circuit, &index.gates);
    let keys: Vec<usize> =
        ces.iter().zip(&demands).flat_map(|(p, d)| std::iter::repeat_n(p.gates[0], d.multiplicity)).collect();
    let order = ConsumptionOrder::from_gate_keys(&keys, &gate_order);
    Ok(CePlan { ces, demands, order, num_remote_gates: index.gates.len() })
}
