//! Analytic EP generation latency: swapping trees over routed paths,
//! independent latency per node pair, concurrent batch latency under link
//! sharing, and purification copy counts.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{link_ep_params, LinkEpParams, LinkId, PairLatency, QuantumNetwork};
use crate::NodeId;

/// Candidate paths examined per node pair.
pub const ROUTE_CANDIDATES: usize = 8;

/// Where a required EP comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind", content = "id")]
pub enum Origin {
    /// Telegate for the gate at this index of the circuit.
    Gate(usize),
    /// Cat-entanglement with this id.
    Ce(usize),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpDemand {
    pub src: NodeId,
    pub dst: NodeId,
    /// Purification copies.
    pub multiplicity: usize,
    pub origin: Origin,
}

/// One EP to generate: a single copy of a demand.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ep {
    pub src: NodeId,
    pub dst: NodeId,
    pub origin: Origin,
    /// Index of the demand this EP belongs to.
    pub demand: usize,
}

/// Expands demands into individual EPs; EP ids are positions in the result.
pub fn expand_demands(demands: &[EpDemand]) -> Vec<Ep> {
    demands
        .iter()
        .enumerate()
        .flat_map(|(i, d)| (0..d.multiplicity).map(move |_| Ep { src: d.src, dst: d.dst, origin: d.origin, demand: i }))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Leaf {
    pub link: LinkId,
    pub params: LinkEpParams,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TreeNode {
    Leaf(usize),
    /// Swap at a path node joining two earlier tree nodes.
    Swap {
        left: usize,
        right: usize,
        at: NodeId,
    },
}

/// Swapping tree over the ordered links of a path (a walk when composed
/// from two routes). Children precede their parent in `nodes`; the root is
/// the last node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwappingTree {
    pub path: Vec<NodeId>,
    pub leaves: Vec<Leaf>,
    pub nodes: Vec<TreeNode>,
    pub p_swap: f64,
}

impl SwappingTree {
    /// Balanced complete binary tree over the path's links.
    pub fn balanced(network: &QuantumNetwork, path: &[NodeId]) -> Result<Self> {
        if path.len() < 2 {
            return Err(Error::Routing { src: path[0], dst: path[0] });
        }
        let leaves = path
            .windows(2)
            .map(|w| {
                let link = network.link_between(w[0], w[1]).ok_or(Error::Routing { src: w[0], dst: w[1] })?;
                Ok(Leaf { link, params: link_ep_params(&network.links[link], &network.params) })
            })
            .collect::<Result<Vec<_>>>()?;
        let mut nodes = Vec::with_capacity(2 * leaves.len());
        build_balanced(&mut nodes, path, 0, leaves.len());
        Ok(SwappingTree { path: path.to_vec(), leaves, nodes, p_swap: network.params.p_swap })
    }

    pub fn hops(&self) -> usize {
        self.leaves.len()
    }

    pub fn root(&self) -> usize {
        self.nodes.len() - 1
    }

    /// Latency multiplier applied per swap level.
    pub fn swap_factor(&self) -> f64 {
        1.5 / self.p_swap
    }

    /// Root latency when leaf `i` takes `leaf_latency(i)`.
    pub fn latency_with(&self, leaf_latency: impl Fn(usize) -> f64) -> f64 {
        let factor = self.swap_factor();
        let mut vals = Vec::with_capacity(self.nodes.len());
        for n in &self.nodes {
            let v = match *n {
                TreeNode::Leaf(i) => leaf_latency(i),
                TreeNode::Swap { left, right, .. } => factor * f64::max(vals[left], vals[right]),
            };
            vals.push(v);
        }
        vals[self.root()]
    }

    /// Latency of an independent generation.
    pub fn latency(&self) -> f64 {
        self.latency_with(|i| self.leaves[i].params.expected_latency())
    }

    /// Swap levels between each leaf and the root.
    pub fn leaf_depths(&self) -> Vec<usize> {
        let mut depth = vec![0usize; self.nodes.len()];
        let mut out = vec![0usize; self.leaves.len()];
        for i in (0..self.nodes.len()).rev() {
            match self.nodes[i] {
                TreeNode::Leaf(l) => out[l] = depth[i],
                TreeNode::Swap { left, right, .. } => {
                    depth[left] = depth[i] + 1;
                    depth[right] = depth[i] + 1;
                }
            }
        }
        out
    }

    /// Depth of the tree (swap levels above the deepest leaf).
    pub fn depth(&self) -> usize {
        let mut depth = vec![0usize; self.nodes.len()];
        for (i, n) in self.nodes.iter().enumerate() {
            if let TreeNode::Swap { left, right, .. } = *n {
                depth[i] = 1 + depth[left].max(depth[right]);
            }
        }
        depth[self.root()]
    }

    /// The same tree read from the other end of the path.
    pub fn reversed(&self) -> Self {
        let n = self.leaves.len();
        let nodes = self
            .nodes
            .iter()
            .map(|t| match *t {
                TreeNode::Leaf(i) => TreeNode::Leaf(n - 1 - i),
                TreeNode::Swap { left, right, at } => TreeNode::Swap { left: right, right: left, at },
            })
            .collect();
        SwappingTree {
            path: self.path.iter().rev().copied().collect(),
            leaves: self.leaves.iter().rev().copied().collect(),
            nodes,
            p_swap: self.p_swap,
        }
    }

    /// Joins two trees whose paths meet at a common node with a final swap there.
    pub fn compose(left: &SwappingTree, right: &SwappingTree) -> Self {
        debug_assert_eq!(left.path.last(), right.path.first());
        let (ln, ll) = (left.nodes.len(), left.leaves.len());
        let mut nodes = left.nodes.clone();
        nodes.extend(right.nodes.iter().map(|t| match *t {
            TreeNode::Leaf(i) => TreeNode::Leaf(i + ll),
            TreeNode::Swap { left, right, at } => TreeNode::Swap { left: left + ln, right: right + ln, at },
        }));
        nodes.push(TreeNode::Swap { left: left.root(), right: ln + right.root(), at: right.path[0] });
        let mut path = left.path.clone();
        path.extend(&right.path[1..]);
        let mut leaves = left.leaves.clone();
        leaves.extend(&right.leaves);
        SwappingTree { path, leaves, nodes, p_swap: left.p_swap }
    }

    fn key(&self) -> (usize, f64, f64) {
        let lat = self.leaves.iter().map(|l| l.params.expected_latency());
        let max = lat.clone().fold(0.0, f64::max);
        (ceil_log2(self.hops()), max, lat.sum())
    }
}

fn ceil_log2(n: usize) -> usize {
    n.next_power_of_two().trailing_zeros() as usize
}

fn build_balanced(nodes: &mut Vec<TreeNode>, path: &[NodeId], lo: usize, hi: usize) -> usize {
    if hi - lo == 1 {
        nodes.push(TreeNode::Leaf(lo));
        return nodes.len() - 1;
    }
    let mid = lo + (hi - lo).div_ceil(2);
    let left = build_balanced(nodes, path, lo, mid);
    let right = build_balanced(nodes, path, mid, hi);
    nodes.push(TreeNode::Swap { left, right, at: path[mid] });
    nodes.len() - 1
}

/// Root latency of a swapping tree under its own leaf parameters.
pub fn tree_latency(tree: &SwappingTree) -> f64 {
    tree.latency()
}

fn bfs_path(
    adj: &[Vec<(NodeId, LinkId)>],
    src: NodeId,
    dst: NodeId,
    banned_nodes: &HashSet<NodeId>,
    banned_links: &HashSet<LinkId>,
) -> Option<Vec<NodeId>> {
    let mut prev = vec![usize::MAX; adj.len()];
    prev[src] = src;
    let mut queue = std::collections::VecDeque::from([src]);
    while let Some(u) = queue.pop_front() {
        if u == dst {
            let mut path = vec![dst];
            let mut cur = dst;
            while cur != src {
                cur = prev[cur];
                path.push(cur);
            }
            path.reverse();
            return Some(path);
        }
        for &(v, l) in &adj[u] {
            if prev[v] == usize::MAX && !banned_nodes.contains(&v) && !banned_links.contains(&l) {
                prev[v] = u;
                queue.push_back(v);
            }
        }
    }
    None
}

/// Up to `k` loopless paths in nondecreasing hop count (Yen).
pub fn k_shortest_paths(network: &QuantumNetwork, src: NodeId, dst: NodeId, k: usize) -> Vec<Vec<NodeId>> {
    let adj = network.adjacency();
    let link_of = |a: NodeId, b: NodeId| adj[a].iter().find(|&&(n, _)| n == b).map(|&(_, l)| l);
    let Some(first) = bfs_path(&adj, src, dst, &HashSet::new(), &HashSet::new()) else {
        return Vec::new();
    };
    let mut found = vec![first];
    let mut candidates: BTreeSet<(usize, Vec<NodeId>)> = BTreeSet::new();
    while found.len() < k {
        let last = found.last().unwrap().clone();
        for i in 0..last.len() - 1 {
            let root = &last[..=i];
            let mut banned_links = HashSet::new();
            for p in &found {
                if p.len() > i && &p[..=i] == root {
                    if let Some(l) = link_of(p[i], p[i + 1]) {
                        banned_links.insert(l);
                    }
                }
            }
            let banned_nodes: HashSet<NodeId> = root[..i].iter().copied().collect();
            if let Some(spur) = bfs_path(&adj, last[i], dst, &banned_nodes, &banned_links) {
                let mut path = root[..i].to_vec();
                path.extend(spur);
                if !found.contains(&path) {
                    candidates.insert((path.len(), path));
                }
            }
        }
        match candidates.pop_first() {
            Some((_, p)) => found.push(p),
            None => break,
        }
    }
    found
}

fn cmp_trees(a: &SwappingTree, la: f64, b: &SwappingTree, lb: f64) -> Ordering {
    let (ka, kb) = (a.key(), b.key());
    la.total_cmp(&lb)
        .then(ka.0.cmp(&kb.0))
        .then(ka.1.total_cmp(&kb.1))
        .then(ka.2.total_cmp(&kb.2))
        .then_with(|| a.path.cmp(&b.path))
}

/// Lowest-latency balanced swapping tree over the candidate paths.
pub fn route_ep(network: &QuantumNetwork, src: NodeId, dst: NodeId) -> Result<SwappingTree> {
    if src == dst || src >= network.num_nodes() || dst >= network.num_nodes() {
        return Err(Error::Routing { src, dst });
    }
    let mut best: Option<(SwappingTree, f64)> = None;
    for path in k_shortest_paths(network, src, dst, ROUTE_CANDIDATES) {
        let tree = SwappingTree::balanced(network, &path)?;
        let lat = tree.latency();
        if best.as_ref().is_none_or(|(b, bl)| cmp_trees(&tree, lat, b, *bl).is_lt()) {
            best = Some((tree, lat));
        }
    }
    best.map(|(t, _)| t).ok_or(Error::Routing { src, dst })
}

/// Routes for every node pair, computed once; read-only afterwards.
#[derive(Debug, Clone)]
pub struct RouteTable {
    n: usize,
    trees: Vec<Option<SwappingTree>>,
    latency: Vec<f64>,
    num_links: usize,
}

impl RouteTable {
    pub fn build(network: &QuantumNetwork) -> Result<Self> {
        let n = network.num_nodes();
        let mut trees = vec![None; n * n];
        let mut latency = vec![0.0; n * n];
        for a in 0..n {
            for b in a + 1..n {
                let t = route_ep(network, a, b)?;
                latency[a * n + b] = t.latency();
                latency[b * n + a] = latency[a * n + b];
                trees[a * n + b] = Some(t);
            }
        }
        let mut table = RouteTable { n, trees, latency, num_links: network.links.len() };
        table.close_under_composition();
        Ok(table)
    }

    /// Replaces a pair's tree by the composition through an intermediate
    /// node whenever that is strictly faster, until no pair improves. At the
    /// fixed point every triple satisfies
    /// `lat(a,c) <= 3/(2 p_swap) * max(lat(a,b), lat(b,c))`.
    fn close_under_composition(&mut self) {
        let n = self.n;
        let mut changed = true;
        while changed {
            changed = false;
            for a in 0..n {
                for c in a + 1..n {
                    for b in 0..n {
                        if b == a || b == c {
                            continue;
                        }
                        let (ab, bc) = (self.ep_latency(a, b), self.ep_latency(b, c));
                        let factor = self.tree(a, c).map_or(1.0, SwappingTree::swap_factor);
                        let cand = factor * ab.max(bc);
                        if cand < self.ep_latency(a, c) * (1.0 - 1e-12) {
                            let t = SwappingTree::compose(&self.oriented(a, b), &self.oriented(b, c));
                            self.latency[a * n + c] = t.latency();
                            self.latency[c * n + a] = self.latency[a * n + c];
                            self.trees[a * n + c] = Some(t);
                            changed = true;
                        }
                    }
                }
            }
        }
    }

    /// Tree for the pair with its path running from `a` to `b`.
    pub fn oriented(&self, a: NodeId, b: NodeId) -> SwappingTree {
        let t = self.tree(a, b).expect("routed pair");
        if a < b {
            t.clone()
        } else {
            t.reversed()
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.n
    }

    pub fn num_links(&self) -> usize {
        self.num_links
    }

    pub fn tree(&self, a: NodeId, b: NodeId) -> Option<&SwappingTree> {
        let (a, b) = (a.min(b), a.max(b));
        self.trees[a * self.n + b].as_ref()
    }

    pub fn ep_latency(&self, a: NodeId, b: NodeId) -> f64 {
        self.latency[a * self.n + b]
    }

    pub fn hops(&self, a: NodeId, b: NodeId) -> usize {
        self.tree(a, b).map_or(0, SwappingTree::hops)
    }
}

impl PairLatency for RouteTable {
    fn pair_latency(&self, a: NodeId, b: NodeId) -> f64 {
        self.ep_latency(a, b)
    }
}

/// Purification copies for an EP routed over `path_hops` links.
pub fn purification_copies(path_hops: usize, hops_per_copy: usize) -> usize {
    path_hops.div_ceil(hops_per_copy.max(1)).max(1)
}

/// Proportional link-sharing model for a set of concurrent EPs. EPs on the
/// same node pair share a route and form one class; a batch is described
/// by its per-class counts.
#[derive(Debug, Clone)]
pub struct SharingModel {
    classes: Vec<(NodeId, NodeId)>,
    trees: Vec<SwappingTree>,
    independent: Vec<f64>,
    /// Per class: (link, leaves on that link).
    link_use: Vec<Vec<(LinkId, u32)>>,
    /// Per class: (link, largest f^depth · leaf latency among its leaves on
    /// that link). The max-product recurrence makes the adjusted root
    /// latency the maximum of weight × load over these entries.
    leaf_weight: Vec<Vec<(LinkId, f64)>>,
    num_links: usize,
}

/// Shared and capped latency of one batch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatchEstimate {
    pub shared: f64,
    pub independent_sum: f64,
}

impl BatchEstimate {
    pub fn makespan(&self) -> f64 {
        self.shared.min(self.independent_sum)
    }
}

impl SharingModel {
    pub fn new(routes: &RouteTable, pairs: impl IntoIterator<Item = (NodeId, NodeId)>) -> Result<Self> {
        let mut classes: Vec<(NodeId, NodeId)> =
            pairs.into_iter().map(|(a, b)| (a.min(b), a.max(b))).collect::<BTreeSet<_>>().into_iter().collect();
        classes.retain(|&(a, b)| a != b);
        let mut trees = Vec::with_capacity(classes.len());
        let mut link_use = Vec::with_capacity(classes.len());
        let mut leaf_weight = Vec::with_capacity(classes.len());
        for &(a, b) in &classes {
            let t = routes.tree(a, b).ok_or(Error::Routing { src: a, dst: b })?.clone();
            let mut uses: BTreeMap<LinkId, u32> = BTreeMap::new();
            let mut weight: BTreeMap<LinkId, f64> = BTreeMap::new();
            for (i, depth) in t.leaf_depths().into_iter().enumerate() {
                let l = &t.leaves[i];
                *uses.entry(l.link).or_default() += 1;
                let w = t.swap_factor().powi(depth as i32) * l.params.expected_latency();
                let e = weight.entry(l.link).or_insert(0.0);
                *e = e.max(w);
            }
            link_use.push(uses.into_iter().collect());
            leaf_weight.push(weight.into_iter().collect());
            trees.push(t);
        }
        let independent = trees.iter().map(SwappingTree::latency).collect();
        Ok(SharingModel { classes, trees, independent, link_use, leaf_weight, num_links: routes.num_links() })
    }

    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn class_of(&self, a: NodeId, b: NodeId) -> Option<usize> {
        self.classes.binary_search(&(a.min(b), a.max(b))).ok()
    }

    pub fn class_pair(&self, class: usize) -> (NodeId, NodeId) {
        self.classes[class]
    }

    pub fn tree(&self, class: usize) -> &SwappingTree {
        &self.trees[class]
    }

    pub fn independent(&self, class: usize) -> f64 {
        self.independent[class]
    }

    pub fn link_loads(&self, counts: &[u32]) -> Vec<u32> {
        let mut loads = vec![0u32; self.num_links];
        for (c, &k) in counts.iter().enumerate() {
            if k > 0 {
                for &(l, u) in &self.link_use[c] {
                    loads[l] += k * u;
                }
            }
        }
        loads
    }

    /// Latency of one class's EP when links carry `loads`.
    pub fn adjusted(&self, class: usize, loads: &[u32]) -> f64 {
        let t = &self.trees[class];
        t.latency_with(|i| t.leaves[i].params.expected_latency() * f64::from(loads[t.leaves[i].link].max(1)))
    }

    pub fn estimate(&self, counts: &[u32]) -> BatchEstimate {
        let loads = self.link_loads(counts);
        let mut shared = 0.0f64;
        let mut independent_sum = 0.0;
        for (c, &k) in counts.iter().enumerate() {
            if k > 0 {
                for &(l, w) in &self.leaf_weight[c] {
                    shared = shared.max(w * f64::from(loads[l]));
                }
                independent_sum += f64::from(k) * self.independent[c];
            }
        }
        BatchEstimate { shared, independent_sum }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchLatencyReport {
    /// Adjusted latency of every expanded EP, in demand order.
    pub per_ep: Vec<f64>,
    pub shared_makespan: f64,
    pub independent_sum: f64,
    pub makespan: f64,
    pub link_loads: BTreeMap<LinkId, u32>,
}

/// Concurrent generation latency of a set of demands, copies included.
pub fn batch_latency(routes: &RouteTable, demands: &[EpDemand]) -> Result<BatchLatencyReport> {
    if demands.is_empty() {
        return Err(Error::Param("empty demand set".into()));
    }
    if let Some(d) = demands.iter().find(|d| d.src == d.dst || d.multiplicity == 0) {
        return Err(Error::Param(format!("invalid demand {d:?}")));
    }
    let model = SharingModel::new(routes, demands.iter().map(|d| (d.src, d.dst)))?;
    let mut counts = vec![0u32; model.num_classes()];
    for d in demands {
        counts[model.class_of(d.src, d.dst).unwrap()] += d.multiplicity as u32;
    }
    let loads = model.link_loads(&counts);
    let est = model.estimate(&counts);
    let per_ep = demands
        .iter()
        .flat_map(|d| {
            let v = model.adjusted(model.class_of(d.src, d.dst).unwrap(), &loads);
            std::iter::repeat_n(v, d.multiplicity)
        })
        .collect();
    Ok(BatchLatencyReport {
        per_ep,
        shared_makespan: est.shared,
        independent_sum: est.independent_sum,
        makespan: est.makespan(),
        link_loads: loads.into_iter().enumerate().filter(|&(_, l)| l > 0).map(|(i, l)| (i as LinkId, l)).collect(),
    })
}
