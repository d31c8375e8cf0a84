//! Quantum network model: nodes with data memories and a coupling graph
//! each, fibre links, physical parameters, Waxman topologies and the
//! network-coupling graph used by qubit allocation.

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::{MemoryId, NodeId};

/// Physical parameters shared by every node and link. Durations in seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NetworkParams {
    /// Atomic BSM (entanglement swap) success probability.
    pub p_swap: f64,
    /// Atomic BSM latency.
    pub t_swap: f64,
    pub p_optical_bsm: f64,
    pub t_atom_photon: f64,
    pub p_atom_photon: f64,
    /// Decoherence threshold.
    pub tau: f64,
    /// One SWAP gate between adjacent data memories.
    pub t_local_swap: f64,
    pub t_gate: f64,
    /// Photon propagation speed in fibre, km/s.
    pub c_fiber: f64,
    /// Optional exponential attenuation length in km; `None` keeps success
    /// probabilities distance-independent.
    pub attenuation_km: Option<f64>,
    /// Path hops covered by one purification copy.
    pub hops_per_copy: usize,
}

impl Default for NetworkParams {
    fn default() -> Self {
        NetworkParams {
            p_swap: 0.4,
            t_swap: 10e-6,
            p_optical_bsm: 0.3,
            t_atom_photon: 50e-6,
            p_atom_photon: 0.33,
            tau: 1.0,
            t_local_swap: 1e-6,
            t_gate: 1e-6,
            c_fiber: 2e5,
            attenuation_km: None,
            hops_per_copy: 3,
        }
    }
}

impl NetworkParams {
    pub fn validate(&self) -> Result<()> {
        for (name, p) in
            [("p_swap", self.p_swap), ("p_optical_bsm", self.p_optical_bsm), ("p_atom_photon", self.p_atom_photon)]
        {
            if !(p > 0.0 && p <= 1.0) {
                return Err(Error::Param(format!("{name}={p} must lie in (0, 1]")));
            }
        }
        for (name, t) in [
            ("t_swap", self.t_swap),
            ("t_atom_photon", self.t_atom_photon),
            ("t_local_swap", self.t_local_swap),
            ("t_gate", self.t_gate),
        ] {
            if !(t >= 0.0) {
                return Err(Error::Param(format!("{name}={t} must be nonnegative")));
            }
        }
        if !(self.tau > 0.0) {
            return Err(Error::Param(format!("tau={} must be positive", self.tau)));
        }
        if !(self.c_fiber > 0.0) {
            return Err(Error::Param("c_fiber must be positive".into()));
        }
        if self.hops_per_copy == 0 {
            return Err(Error::Param("hops_per_copy must be at least 1".into()));
        }
        Ok(())
    }
}

/// Execution memories per node when not configured.
pub fn default_exec_capacity() -> usize {
    8
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkNode {
    pub id: NodeId,
    pub x: f64,
    pub y: f64,
    /// Global ids of this node's data memories, laid out row-major on the grid.
    pub memories: Vec<MemoryId>,
    /// (rows, cols) of the coupling grid.
    pub grid_dims: (usize, usize),
    #[serde(default = "default_exec_capacity")]
    pub exec_memory_capacity: usize,
}

/// Near-square grid holding `k` memories.
pub fn grid_dims_for(k: usize) -> (usize, usize) {
    if k == 0 {
        return (0, 0);
    }
    let cols = (k as f64).sqrt().ceil() as usize;
    (k.div_ceil(cols), cols)
}

impl NetworkNode {
    /// Coupling-graph edges over local memory indices.
    pub fn coupling_edges(&self) -> Vec<(usize, usize)> {
        let (_, cols) = self.grid_dims;
        let k = self.memories.len();
        let mut edges = Vec::new();
        for i in 0..k {
            if (i % cols) + 1 < cols && i + 1 < k {
                edges.push((i, i + 1));
            }
            if i + cols < k {
                edges.push((i, i + cols));
            }
        }
        edges
    }

    /// All-pairs hop distances in the coupling graph, by local index.
    pub fn coupling_distances(&self) -> Result<Vec<Vec<u32>>> {
        let k = self.memories.len();
        let (rows, cols) = self.grid_dims;
        if k > rows * cols || (k > 0 && cols == 0) {
            return Err(Error::Model(format!("node {} holds {k} memories but its grid is {rows}x{cols}", self.id)));
        }
        let mut adj = vec![Vec::new(); k];
        for (a, b) in self.coupling_edges() {
            adj[a].push(b);
            adj[b].push(a);
        }
        let mut out = Vec::with_capacity(k);
        for s in 0..k {
            let d = bfs(&adj, s);
            if d.contains(&u32::MAX) {
                return Err(Error::Model(format!("coupling graph of node {} is disconnected", self.id)));
            }
            out.push(d);
        }
        Ok(out)
    }
}

fn bfs(adj: &[Vec<usize>], s: usize) -> Vec<u32> {
    let mut dist = vec![u32::MAX; adj.len()];
    dist[s] = 0;
    let mut q = VecDeque::from([s]);
    while let Some(u) = q.pop_front() {
        for &v in &adj[u] {
            if dist[v] == u32::MAX {
                dist[v] = dist[u] + 1;
                q.push_back(v);
            }
        }
    }
    dist
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Link {
    pub a: NodeId,
    pub b: NodeId,
    pub length_km: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantumNetwork {
    pub params: NetworkParams,
    pub nodes: Vec<NetworkNode>,
    pub links: Vec<Link>,
}

pub type LinkId = usize;

impl QuantumNetwork {
    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn num_memories(&self) -> usize {
        self.nodes.iter().map(|n| n.memories.len()).sum()
    }

    /// Per node: `(neighbour, link id)`, sorted by neighbour.
    pub fn adjacency(&self) -> Vec<Vec<(NodeId, LinkId)>> {
        let mut adj = vec![Vec::new(); self.nodes.len()];
        for (i, l) in self.links.iter().enumerate() {
            adj[l.a].push((l.b, i));
            adj[l.b].push((l.a, i));
        }
        for v in &mut adj {
            v.sort_unstable();
        }
        adj
    }

    pub fn link_between(&self, a: NodeId, b: NodeId) -> Option<LinkId> {
        self.links.iter().position(|l| (l.a == a && l.b == b) || (l.a == b && l.b == a))
    }

    /// Host node of every memory, indexed by memory id.
    pub fn memory_hosts(&self) -> Vec<NodeId> {
        let mut hosts = vec![usize::MAX; self.num_memories()];
        for n in &self.nodes {
            for &m in &n.memories {
                if m < hosts.len() {
                    hosts[m] = n.id;
                }
            }
        }
        hosts
    }

    /// Hop distances between network nodes.
    pub fn hop_distances(&self) -> Vec<Vec<u32>> {
        let adj: Vec<Vec<usize>> =
            self.adjacency().into_iter().map(|v| v.into_iter().map(|(n, _)| n).collect()).collect();
        (0..self.nodes.len()).map(|s| bfs(&adj, s)).collect()
    }

    pub fn is_connected(&self) -> bool {
        self.nodes.is_empty() || self.hop_distances()[0].iter().all(|&d| d != u32::MAX)
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        for (i, n) in self.nodes.iter().enumerate() {
            if n.id != i {
                return Err(Error::Model(format!("node at position {i} has id {}", n.id)));
            }
            n.coupling_distances()?;
        }
        let mut seen = vec![false; self.num_memories()];
        for &m in self.nodes.iter().flat_map(|n| &n.memories) {
            if m >= seen.len() || std::mem::replace(&mut seen[m], true) {
                return Err(Error::Model(format!("memory id {m} is duplicated or out of range")));
            }
        }
        for l in &self.links {
            if l.a >= self.nodes.len() || l.b >= self.nodes.len() || l.a == l.b {
                return Err(Error::Model(format!("bad link {}-{}", l.a, l.b)));
            }
            if !(l.length_km > 0.0) {
                return Err(Error::Model(format!("link {}-{} has nonpositive length", l.a, l.b)));
            }
        }
        if !self.is_connected() {
            return Err(Error::Model("network is disconnected".into()));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let n: QuantumNetwork = serde_json::from_str(s)?;
        n.validate()?;
        Ok(n)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WaxmanParams {
    pub num_nodes: usize,
    pub area_km: f64,
    pub beta: f64,
    pub alpha: f64,
    pub total_data_memories: usize,
    pub exec_memory_capacity: usize,
}

impl Default for WaxmanParams {
    fn default() -> Self {
        WaxmanParams {
            num_nodes: 10,
            area_km: 100.0,
            beta: 0.6,
            alpha: 0.2,
            total_data_memories: 50,
            exec_memory_capacity: default_exec_capacity(),
        }
    }
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

/// Waxman random graph in a square area. Components left disconnected by
/// the random draw are joined by their shortest inter-component pairs, so
/// the result is always connected.
pub fn generate_waxman(wp: &WaxmanParams, params: NetworkParams, seed: u64) -> Result<QuantumNetwork> {
    if wp.num_nodes < 2 {
        return Err(Error::Param(format!("need at least 2 nodes, got {}", wp.num_nodes)));
    }
    if !(wp.area_km > 0.0 && wp.beta > 0.0 && wp.alpha > 0.0) {
        return Err(Error::Param("area, beta and alpha must be positive".into()));
    }
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = wp.num_nodes;
    let pos: Vec<(f64, f64)> =
        (0..n).map(|_| (rng.random_range(0.0..wp.area_km), rng.random_range(0.0..wp.area_km))).collect();
    let dist = |a: usize, b: usize| {
        let (dx, dy) = (pos[a].0 - pos[b].0, pos[a].1 - pos[b].1);
        (dx * dx + dy * dy).sqrt().max(1e-3)
    };
    let mut pairs: Vec<(usize, usize)> = (0..n).flat_map(|a| (a + 1..n).map(move |b| (a, b))).collect();
    let l_max = pairs.iter().map(|&(a, b)| dist(a, b)).fold(0.0, f64::max);

    let mut links = Vec::new();
    let mut parent: Vec<usize> = (0..n).collect();
    for &(a, b) in &pairs {
        let p = wp.beta * (-dist(a, b) / (wp.alpha * l_max)).exp();
        if rng.random_bool(p.min(1.0)) {
            links.push(Link { a, b, length_km: dist(a, b) });
            let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
            parent[ra] = rb;
        }
    }
    pairs.sort_by(|&(a, b), &(c, d)| dist(a, b).total_cmp(&dist(c, d)).then((a, b).cmp(&(c, d))));
    for &(a, b) in &pairs {
        let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
        if ra != rb {
            parent[ra] = rb;
            links.push(Link { a, b, length_km: dist(a, b) });
        }
    }
    links.sort_by_key(|l| (l.a, l.b));

    let mut counts = vec![0usize; n];
    for _ in 0..wp.total_data_memories {
        counts[rng.random_range(0..n)] += 1;
    }
    let mut next_mem = 0;
    let nodes = (0..n)
        .map(|id| {
            let memories: Vec<MemoryId> = (next_mem..next_mem + counts[id]).collect();
            next_mem += counts[id];
            NetworkNode {
                id,
                x: pos[id].0,
                y: pos[id].1,
                grid_dims: grid_dims_for(memories.len()),
                memories,
                exec_memory_capacity: wp.exec_memory_capacity,
            }
        })
        .collect();
    Ok(QuantumNetwork { params, nodes, links })
}

/// Elementary (single-link) EP attempt model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkEpParams {
    pub attempt_latency: f64,
    pub attempt_success: f64,
}

impl LinkEpParams {
    /// Expected time to the first successful attempt.
    pub fn expected_latency(&self) -> f64 {
        self.attempt_latency / self.attempt_success
    }
}

/// Atom-photon generation at both ends plus an optical BSM at the link
/// midpoint; the heralding signal travels the fibre once.
pub fn link_ep_params(link: &Link, params: &NetworkParams) -> LinkEpParams {
    let attempt_latency = params.t_atom_photon + link.length_km / params.c_fiber + params.t_swap;
    let mut attempt_success = params.p_atom_photon * params.p_atom_photon * params.p_optical_bsm;
    if let Some(att) = params.attenuation_km {
        attempt_success *= (-link.length_km / att).exp();
    }
    LinkEpParams { attempt_latency, attempt_success }
}

/// Independent EP generation latency between network nodes.
pub trait PairLatency {
    fn pair_latency(&self, a: NodeId, b: NodeId) -> f64;
}

/// Complete weighted graph over all data memories.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkCouplingGraph {
    n: usize,
    weights: Vec<f64>,
    hosts: Vec<NodeId>,
}

impl NetworkCouplingGraph {
    pub fn from_matrix(n: usize, weights: Vec<f64>, hosts: Vec<NodeId>) -> Self {
        assert_eq!(weights.len(), n * n);
        assert_eq!(hosts.len(), n);
        NetworkCouplingGraph { n, weights, hosts }
    }

    pub fn num_nodes(&self) -> usize {
        self.n
    }

    pub fn weight(&self, a: MemoryId, b: MemoryId) -> f64 {
        self.weights[a * self.n + b]
    }

    pub fn host(&self, m: MemoryId) -> NodeId {
        self.hosts[m]
    }

    pub fn hosts(&self) -> &[NodeId] {
        &self.hosts
    }
}

pub fn build_network_coupling_graph(
    network: &QuantumNetwork,
    latency: &impl PairLatency,
) -> Result<NetworkCouplingGraph> {
    let n = network.num_memories();
    let hosts = network.memory_hosts();
    if hosts.contains(&usize::MAX) {
        return Err(Error::Model("memory ids are not contiguous".into()));
    }
    let mut weights = vec![0.0; n * n];
    let mut local = vec![usize::MAX; n];
    let mut dists = Vec::with_capacity(network.nodes.len());
    for node in &network.nodes {
        for (i, &m) in node.memories.iter().enumerate() {
            local[m] = i;
        }
        dists.push(node.coupling_distances()?);
    }
    let t = network.params.t_local_swap;
    for a in 0..n {
        for b in 0..n {
            if a == b {
                continue;
            }
            let (ha, hb) = (hosts[a], hosts[b]);
            weights[a * n + b] = if ha == hb {
                2.0 * f64::from(dists[ha][local[a]][local[b]]) * t
            } else {
                latency.pair_latency(ha, hb)
            };
        }
    }
    Ok(NetworkCouplingGraph { n, weights, hosts })
}
