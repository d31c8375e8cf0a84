//! Seeded discrete-event simulation of a planned execution.
//!
//! Every link serves its pending elementary-EP requests round-robin, one
//! attempt at a time. Attempts on a link are i.i.d., so the engine draws
//! the number of attempts until the link's next success instead of
//! simulating each attempt. Swaps fire when both children exist; a failed
//! swap discards both children and regenerates their subtrees.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Geometric};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::entanglement::{RouteTable, SwappingTree, TreeNode};
use crate::error::{Error, Result};
use crate::network::{link_ep_params, LinkId, QuantumNetwork};
use crate::pipeline::Plan;
use crate::{EpId, NodeId};

/// Regeneration rounds per batch before expired EPs are consumed anyway.
const MAX_REGENERATIONS: usize = 64;

const LINK_STREAM: u64 = 1 << 32;
const NODE_STREAM: u64 = 2 << 32;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub seed: u64,
    pub trials: usize,
    /// Run each batch's gates while the next batch is generated.
    pub overlap_next_batch: bool,
    pub record_trace: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig { seed: 0, trials: 100, overlap_next_batch: false, record_trace: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub time: f64,
    pub kind: String,
    pub subject: String,
    pub outcome: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimResult {
    /// Total execution time of each trial.
    pub totals: Vec<f64>,
    pub mean: f64,
    pub stddev: f64,
    pub decoherence_violations: usize,
    /// Mean realized latency of each EP, from its batch's start.
    pub ep_latencies: Vec<f64>,
    /// Mean realized generation time of each batch.
    pub batch_times: Vec<f64>,
    /// Mean aggregate time EPs wait in memory between creation and use.
    pub ep_memory_time: f64,
    /// Per trial, when tracing was requested.
    pub traces: Option<Vec<Vec<TraceEvent>>>,
}

/// Sample mean and standard deviation (zero for a single sample).
pub fn mean_stddev(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Flattened tree structure for the engine.
struct TreeInfo {
    parent: Vec<usize>,
    children: Vec<Option<(usize, usize)>>,
    at: Vec<NodeId>,
    leaf_node: Vec<usize>,
    leaf_link: Vec<LinkId>,
    /// Per node: the nodes and the leaves of its subtree.
    sub_nodes: Vec<Vec<usize>>,
    sub_leaves: Vec<Vec<usize>>,
    root: usize,
}

impl TreeInfo {
    fn new(tree: &SwappingTree, num_links: usize, num_nodes: usize) -> Result<Self> {
        let n = tree.nodes.len();
        if n == 0 {
            return Err(Error::Plan("empty swapping tree".into()));
        }
        let mut info = TreeInfo {
            parent: vec![usize::MAX; n],
            children: vec![None; n],
            at: vec![usize::MAX; n],
            leaf_node: vec![usize::MAX; tree.leaves.len()],
            leaf_link: tree.leaves.iter().map(|l| l.link).collect(),
            sub_nodes: Vec::with_capacity(n),
            sub_leaves: Vec::with_capacity(n),
            root: n - 1,
        };
        if let Some(&l) = info.leaf_link.iter().find(|&&l| l >= num_links) {
            return Err(Error::Plan(format!("tree uses unknown link {l}")));
        }
        for (i, node) in tree.nodes.iter().enumerate() {
            match *node {
                TreeNode::Leaf(j) => {
                    if j >= tree.leaves.len() {
                        return Err(Error::Plan(format!("tree node {i} names missing leaf {j}")));
                    }
                    info.leaf_node[j] = i;
                    info.sub_nodes.push(vec![i]);
                    info.sub_leaves.push(vec![j]);
                }
                TreeNode::Swap { left, right, at } => {
                    if left >= i || right >= i || at >= num_nodes {
                        return Err(Error::Plan(format!("malformed swap at tree node {i}")));
                    }
                    info.parent[left] = i;
                    info.parent[right] = i;
                    info.children[i] = Some((left, right));
                    info.at[i] = at;
                    let nodes = [&info.sub_nodes[left][..], &info.sub_nodes[right][..], &[i]].concat();
                    let leaves = [&info.sub_leaves[left][..], &info.sub_leaves[right][..]].concat();
                    info.sub_nodes.push(nodes);
                    info.sub_leaves.push(leaves);
                }
            }
        }
        if info.leaf_node.contains(&usize::MAX) {
            return Err(Error::Plan("tree leaf without a node".into()));
        }
        Ok(info)
    }
}

/// Independent random streams of one trial, one per link and per node.
struct Streams {
    links: Vec<ChaCha8Rng>,
    nodes: Vec<ChaCha8Rng>,
}

impl Streams {
    fn new(seed: u64, trial: u64, num_links: usize, num_nodes: usize) -> Self {
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&seed.to_le_bytes());
        key[8..16].copy_from_slice(&trial.to_le_bytes());
        let stream = |id: u64| {
            let mut rng = ChaCha8Rng::from_seed(key);
            rng.set_stream(id);
            rng
        };
        Streams {
            links: (0..num_links as u64).map(|l| stream(LINK_STREAM | l)).collect(),
            nodes: (0..num_nodes as u64).map(|n| stream(NODE_STREAM | n)).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Event {
    LinkSuccess { link: LinkId, generation: u64 },
    Swap { ep: usize, node: usize },
}

#[derive(Debug, Clone, Copy)]
struct Timed {
    time: f64,
    seq: u64,
    event: Event,
}

impl PartialEq for Timed {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Timed {}

impl PartialOrd for Timed {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Timed {
    /// Reversed so that the max-heap pops the earliest event.
    fn cmp(&self, other: &Self) -> Ordering {
        other.time.total_cmp(&self.time).then(other.seq.cmp(&self.seq))
    }
}

/// Round-robin attempt state of one link. The front of `queue` is served
/// by the attempt starting at `t0`; the `n`-th attempt from `t0` succeeds.
#[derive(Default)]
struct Lane {
    queue: VecDeque<(usize, usize)>,
    t0: f64,
    n: u64,
    generation: u64,
}

struct LinkModel {
    attempt: f64,
    geometric: Geometric,
}

/// Physical constants and trees shared by all trials.
struct Model<'a> {
    links: Vec<LinkModel>,
    trees: Vec<TreeInfo>,
    ep_tree: &'a [usize],
    p_swap: f64,
    t_swap: f64,
    num_nodes: usize,
}

impl<'a> Model<'a> {
    fn new(network: &QuantumNetwork, trees: &[SwappingTree], ep_tree: &'a [usize]) -> Result<Self> {
        let links = network
            .links
            .iter()
            .map(|l| {
                let p = link_ep_params(l, &network.params);
                let geometric = Geometric::new(p.attempt_success)
                    .map_err(|e| Error::Param(format!("attempt success {}: {e}", p.attempt_success)))?;
                Ok(LinkModel { attempt: p.attempt_latency, geometric })
            })
            .collect::<Result<Vec<_>>>()?;
        let trees = trees
            .iter()
            .map(|t| TreeInfo::new(t, network.links.len(), network.num_nodes()))
            .collect::<Result<Vec<_>>>()?;
        if let Some(e) = ep_tree.iter().position(|&t| t >= trees.len()) {
            return Err(Error::Plan(format!("EP {e} has no swapping tree")));
        }
        Ok(Model {
            links,
            trees,
            ep_tree,
            p_swap: network.params.p_swap,
            t_swap: network.params.t_swap,
            num_nodes: network.num_nodes(),
        })
    }
}

/// Event loop generating one set of EPs concurrently from time zero.
struct Generation<'m, 's> {
    model: &'m Model<'m>,
    streams: &'s mut Streams,
    eps: &'s [EpId],
    base: Vec<usize>,
    ready: Vec<bool>,
    created: Vec<f64>,
    pending: usize,
    lanes: Vec<Lane>,
    heap: BinaryHeap<Timed>,
    seq: u64,
    offset: f64,
    trace: Option<&'s mut Vec<TraceEvent>>,
}

impl<'m, 's> Generation<'m, 's> {
    fn tree(&self, k: usize) -> &'m TreeInfo {
        &self.model.trees[self.model.ep_tree[self.eps[k]]]
    }

    fn log(&mut self, time: f64, kind: &str, subject: String, outcome: &str) {
        if let Some(t) = self.trace.as_deref_mut() {
            t.push(TraceEvent { time: self.offset + time, kind: kind.into(), subject, outcome: outcome.into() });
        }
    }

    fn push(&mut self, time: f64, event: Event) {
        self.seq += 1;
        self.heap.push(Timed { time, seq: self.seq, event });
    }

    fn draw(&mut self, link: LinkId, t0: f64) {
        let failures = self.model.links[link].geometric.sample(&mut self.streams.links[link]);
        let lane = &mut self.lanes[link];
        lane.t0 = t0;
        lane.n = failures.saturating_add(1);
        lane.generation += 1;
        let (time, generation) = (t0 + lane.n as f64 * self.model.links[link].attempt, lane.generation);
        self.push(time, Event::LinkSuccess { link, generation });
    }

    /// Queues leaf `leaf` of EP `k` on its link at time `t`.
    fn request(&mut self, k: usize, leaf: usize, t: f64) {
        let link = self.tree(k).leaf_link[leaf];
        let attempt = self.model.links[link].attempt;
        let lane = &mut self.lanes[link];
        if lane.queue.is_empty() {
            lane.queue.push_back((k, leaf));
            self.draw(link, t);
            return;
        }
        let started = ((t - lane.t0) / attempt).floor().max(0.0) as u64;
        if started + 1 >= lane.n {
            // The attempt in progress is the successful one.
            lane.queue.push_back((k, leaf));
            return;
        }
        let len = lane.queue.len() as u64;
        lane.queue.rotate_left(((started + 1) % len) as usize);
        lane.queue.push_back((k, leaf));
        let t1 = lane.t0 + (started + 1) as f64 * attempt;
        self.draw(link, t1);
    }

    fn node_ready(&mut self, k: usize, node: usize, t: f64) {
        let tree = self.tree(k);
        self.ready[self.base[k] + node] = true;
        if node == tree.root {
            self.created[k] = t;
            self.pending -= 1;
            let e = self.eps[k];
            self.log(t, "ep", format!("ep {e}"), "ready");
            return;
        }
        let parent = tree.parent[node];
        let (l, r) = tree.children[parent].expect("parents are swaps");
        let sibling = if l == node { r } else { l };
        if self.ready[self.base[k] + sibling] {
            self.push(t + self.model.t_swap, Event::Swap { ep: k, node: parent });
        }
    }

    fn run(mut self) -> Vec<f64> {
        for k in 0..self.eps.len() {
            for leaf in 0..self.tree(k).leaf_link.len() {
                self.request(k, leaf, 0.0);
            }
        }
        while self.pending > 0 {
            let Timed { time, event, .. } = self.heap.pop().expect("pending EPs have events");
            match event {
                Event::LinkSuccess { link, generation } => {
                    if generation != self.lanes[link].generation {
                        continue;
                    }
                    let lane = &mut self.lanes[link];
                    let idx = ((lane.n - 1) % lane.queue.len() as u64) as usize;
                    lane.queue.rotate_left(idx);
                    let (k, leaf) = lane.queue.pop_front().expect("a served request");
                    if !lane.queue.is_empty() {
                        self.draw(link, time);
                    }
                    let e = self.eps[k];
                    self.log(time, "link", format!("link {link} ep {e}"), "success");
                    let node = self.tree(k).leaf_node[leaf];
                    self.node_ready(k, node, time);
                }
                Event::Swap { ep: k, node } => {
                    let tree = self.tree(k);
                    let at = tree.at[node];
                    let ok = self.streams.nodes[at].random_bool(self.model.p_swap);
                    let e = self.eps[k];
                    self.log(time, "swap", format!("node {at} ep {e}"), if ok { "success" } else { "failure" });
                    if ok {
                        self.node_ready(k, node, time);
                    } else {
                        for &n in &tree.sub_nodes[node] {
                            self.ready[self.base[k] + n] = false;
                        }
                        for &leaf in &tree.sub_leaves[node] {
                            self.request(k, leaf, time);
                        }
                    }
                }
            }
        }
        self.created
    }
}

/// Creation times of `eps` generated concurrently from time zero.
fn generate(
    model: &Model,
    streams: &mut Streams,
    eps: &[EpId],
    offset: f64,
    trace: Option<&mut Vec<TraceEvent>>,
) -> Vec<f64> {
    let mut base = Vec::with_capacity(eps.len());
    let mut total = 0;
    for &e in eps {
        base.push(total);
        total += model.trees[model.ep_tree[e]].parent.len();
    }
    Generation {
        model,
        streams,
        eps,
        base,
        ready: vec![false; total],
        created: vec![f64::NAN; eps.len()],
        pending: eps.len(),
        lanes: (0..model.links.len()).map(|_| Lane::default()).collect(),
        heap: BinaryHeap::new(),
        seq: 0,
        offset,
        trace,
    }
    .run()
}

struct TrialOutcome {
    total: f64,
    violations: usize,
    ep_latency: Vec<f64>,
    batch_time: Vec<f64>,
    memory_time: f64,
    trace: Option<Vec<TraceEvent>>,
}

fn run_trial(model: &Model, plan: &Plan, config: &SimConfig, trial: u64) -> TrialOutcome {
    let mut streams = Streams::new(config.seed, trial, model.links.len(), model.num_nodes);
    let mut trace = config.record_trace.then(Vec::new);
    let mut ep_latency = vec![0.0; plan.eps.len()];
    let mut batch_time = Vec::with_capacity(plan.schedule.batches.len());
    let (mut violations, mut memory_time) = (0, 0.0);
    // End of the previous batch's generation and of its gate segment.
    let (mut gen_done, mut seg_done) = (0.0f64, 0.0f64);
    for (b, batch) in plan.schedule.batches.iter().enumerate() {
        let start = if config.overlap_next_batch { gen_done } else { seg_done };
        let created = generate(model, &mut streams, &batch.eps, start, trace.as_mut());
        let mut created: Vec<f64> = created.into_iter().map(|c| start + c).collect();
        for (&e, &c) in batch.eps.iter().zip(&created) {
            ep_latency[e] = c - start;
        }
        let gen_end = created.iter().copied().fold(start, f64::max);
        batch_time.push(gen_end - start);
        let mut consume = if config.overlap_next_batch { gen_end.max(seg_done) } else { gen_end };
        let mut done = gen_end;
        for _ in 0..MAX_REGENERATIONS {
            let expired: Vec<usize> = (0..created.len()).filter(|&k| consume - created[k] > plan.tau).collect();
            if expired.is_empty() {
                break;
            }
            violations += expired.len();
            let eps: Vec<EpId> = expired.iter().map(|&k| batch.eps[k]).collect();
            if let Some(t) = trace.as_mut() {
                t.extend(eps.iter().map(|e| TraceEvent {
                    time: consume,
                    kind: "decoherence".into(),
                    subject: format!("ep {e}"),
                    outcome: "expired".into(),
                }));
            }
            let again = generate(model, &mut streams, &eps, consume, trace.as_mut());
            let mut end = consume;
            for (&k, c) in expired.iter().zip(again) {
                created[k] = consume + c;
                end = end.max(created[k]);
            }
            consume = end;
            done = end;
        }
        memory_time += created.iter().map(|&c| consume - c).sum::<f64>();
        gen_done = done;
        seg_done = consume + plan.segments.get(b).copied().unwrap_or(0.0);
        if let Some(t) = trace.as_mut() {
            t.push(TraceEvent {
                time: seg_done,
                kind: "batch".into(),
                subject: format!("batch {b}"),
                outcome: "executed".into(),
            });
        }
    }
    if plan.schedule.batches.is_empty() {
        seg_done = plan.segments.iter().sum();
    }
    TrialOutcome { total: seg_done, violations, ep_latency, batch_time, memory_time, trace }
}

fn check_plan(plan: &Plan, config: &SimConfig) -> Result<()> {
    if config.trials == 0 {
        return Err(Error::Param("at least one trial is required".into()));
    }
    if plan.ep_tree.len() != plan.eps.len() {
        return Err(Error::Plan(format!("{} EPs but {} tree assignments", plan.eps.len(), plan.ep_tree.len())));
    }
    if let Some(e) = plan.schedule.batches.iter().flat_map(|b| &b.eps).find(|&&e| e >= plan.eps.len()) {
        return Err(Error::Plan(format!("schedule names unknown EP {e}")));
    }
    if plan.segments.len() < plan.schedule.batches.len() {
        return Err(Error::Plan("missing gate segments".into()));
    }
    Ok(())
}

/// Simulates `plan` on `network` for `config.trials` independent trials.
pub fn simulate(plan: &Plan, network: &QuantumNetwork, config: &SimConfig) -> Result<SimResult> {
    check_plan(plan, config)?;
    let model = Model::new(network, &plan.trees, &plan.ep_tree)?;
    let outcomes: Vec<TrialOutcome> =
        (0..config.trials as u64).into_par_iter().map(|t| run_trial(&model, plan, config, t)).collect();
    let n = outcomes.len() as f64;
    let totals: Vec<f64> = outcomes.iter().map(|o| o.total).collect();
    let (mean, stddev) = mean_stddev(&totals);
    let mut ep_latencies = vec![0.0; plan.eps.len()];
    let mut batch_times = vec![0.0; plan.schedule.batches.len()];
    for o in &outcomes {
        ep_latencies.iter_mut().zip(&o.ep_latency).for_each(|(a, x)| *a += x / n);
        batch_times.iter_mut().zip(&o.batch_time).for_each(|(a, x)| *a += x / n);
    }
    Ok(SimResult {
        totals,
        mean,
        stddev,
        decoherence_violations: outcomes.iter().map(|o| o.violations).sum(),
        ep_latencies,
        batch_times,
        ep_memory_time: outcomes.iter().map(|o| o.memory_time).sum::<f64>() / n,
        traces: config.record_trace.then(|| outcomes.into_iter().map(|o| o.trace.unwrap_or_default()).collect()),
    })
}

/// Writes traces as CSV with columns `trial,time,kind,subject,outcome`.
pub fn write_trace(traces: &[Vec<TraceEvent>], out: impl std::io::Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["trial", "time", "kind", "subject", "outcome"])?;
    for (trial, events) in traces.iter().enumerate() {
        for e in events {
            w.write_record([
                trial.to_string(),
                e.time.to_string(),
                e.kind.clone(),
                e.subject.clone(),
                e.outcome.clone(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationRow {
    pub src: NodeId,
    pub dst: NodeId,
    pub hops: usize,
    pub analytic: f64,
    pub simulated: f64,
    /// simulated / analytic
    pub ratio: f64,
}

/// Monte-Carlo mean latency of one independent EP per pair, against the
/// analytic tree latency.
pub fn calibrate(
    network: &QuantumNetwork,
    routes: &RouteTable,
    pairs: &[(NodeId, NodeId)],
    trials: usize,
    seed: u64,
) -> Result<Vec<CalibrationRow>> {
    if trials == 0 && !pairs.is_empty() {
        return Err(Error::Param("at least one trial is required".into()));
    }
    let trees = pairs
        .iter()
        .map(|&(a, b)| {
            if a >= routes.num_nodes() || b >= routes.num_nodes() || a == b {
                return Err(Error::Routing { src: a, dst: b });
            }
            Ok(routes.oriented(a, b))
        })
        .collect::<Result<Vec<_>>>()?;
    let ep_tree: Vec<usize> = (0..trees.len()).collect();
    let model = Model::new(network, &trees, &ep_tree)?;
    Ok(pairs
        .iter()
        .enumerate()
        .map(|(i, &(src, dst))| {
            let sum: f64 = (0..trials as u64)
                .into_par_iter()
                .map(|t| {
                    let mut streams = Streams::new(seed, t, model.links.len(), model.num_nodes);
                    generate(&model, &mut streams, &[i], 0.0, None)[0]
                })
                .collect::<Vec<f64>>()
                .iter()
                .sum();
            let simulated = sum / trials as f64;
            let analytic = trees[i].latency();
            CalibrationRow { src, dst, hops: trees[i].hops(), analytic, simulated, ratio: simulated / analytic }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::allocation::Allocation;
    use crate::circuit::{generate_random_circuit, Circuit, GateKind, RandomCircuitParams};
    use crate::network::{generate_waxman, NetworkParams, WaxmanParams};
    use crate::pipeline::{plan, Algorithm, Instance};
    use crate::scheduling::Schedule;
    use crate::testutil::line_network;

    fn instance(params: NetworkParams, seed: u64) -> Instance {
        let p = RandomCircuitParams { num_qubits: 12, gates_per_qubit: 8, ..Default::default() };
        let c = generate_random_circuit(&p, seed).unwrap();
        let wp = WaxmanParams { num_nodes: 4, total_data_memories: 12, ..Default::default() };
        let net = generate_waxman(&wp, params, seed).unwrap();
        Instance::allocate(c, net).unwrap()
    }

    fn certain() -> NetworkParams {
        NetworkParams { p_swap: 1.0, p_optical_bsm: 1.0, p_atom_photon: 1.0, ..Default::default() }
    }

    #[test]
    fn geometric_mean_of_one_link() {
        // attempt = 5 + 0 + 5 µs with p = 0.5: mean 20 µs.
        let params = NetworkParams {
            t_atom_photon: 5e-6,
            t_swap: 5e-6,
            p_atom_photon: 1.0,
            p_optical_bsm: 0.5,
            ..Default::default()
        };
        let net = line_network(&[0.0], params);
        let routes = RouteTable::build(&net).unwrap();
        let rows = calibrate(&net, &routes, &[(0, 1)], 10_000, 7).unwrap();
        assert!((rows[0].simulated - 20e-6).abs() <= 0.05 * 20e-6, "{:?}", rows[0]);
    }

    #[test]
    fn calibration_of_default_links() {
        let net = line_network(&[10.0, 40.0, 25.0], NetworkParams::default());
        let routes = RouteTable::build(&net).unwrap();
        let rows = calibrate(&net, &routes, &[(0, 1), (1, 2), (2, 3)], 10_000, 1).unwrap();
        for r in rows {
            assert!((0.9..=1.1).contains(&r.ratio), "{r:?}");
        }
        assert!(calibrate(&net, &routes, &[], 10, 1).unwrap().is_empty());
    }

    #[test]
    fn certain_multi_hop_ratio_in_band() {
        let params = NetworkParams { p_swap: 1.0, ..Default::default() };
        let net = line_network(&[10.0, 10.0, 10.0, 10.0], params);
        let routes = RouteTable::build(&net).unwrap();
        let rows = calibrate(&net, &routes, &[(0, 2), (0, 4)], 4000, 3).unwrap();
        for r in rows {
            assert!((0.5..=1.5).contains(&r.ratio), "{r:?}");
        }
    }

    #[test]
    fn deterministic_for_a_seed() {
        let inst = instance(NetworkParams::default(), 2);
        let p = plan(&inst, Algorithm::DpTg).unwrap();
        let cfg = SimConfig { seed: 9, trials: 8, record_trace: true, ..Default::default() };
        let a = simulate(&p, &inst.network, &cfg).unwrap();
        let b = simulate(&p, &inst.network, &cfg).unwrap();
        assert_eq!(a, b);
        assert!(!a.traces.as_ref().unwrap()[0].is_empty());
        let c = simulate(&p, &inst.network, &SimConfig { seed: 10, ..cfg }).unwrap();
        assert_ne!(a.totals, c.totals);
    }

    #[test]
    fn certain_disjoint_links_match_the_analytic_batch() {
        // Two single-link EPs on different links, no randomness.
        let net = line_network(&[10.0, 20.0, 30.0], certain());
        let mut c = Circuit::new(4);
        c.push(GateKind::Cz, vec![0, 1]);
        c.push(GateKind::Cz, vec![2, 3]);
        let inst = Instance::new(c, net, Allocation { eta: vec![0, 1, 2, 3] }).unwrap();
        let p = plan(&inst, Algorithm::DpTg).unwrap();
        assert_eq!(p.schedule.batches.len(), 1);
        let r = simulate(&p, &inst.network, &SimConfig { trials: 3, ..Default::default() }).unwrap();
        let expected = p.analytic_total() + p.segments.iter().sum::<f64>();
        for t in &r.totals {
            assert!((t - expected).abs() < 1e-12, "{t} vs {expected}");
        }
    }

    #[test]
    fn total_decomposes_and_overlap_never_hurts() {
        for seed in 0..3 {
            let params = NetworkParams { tau: 1e6, ..Default::default() };
            let inst = instance(params, seed);
            let p = plan(&inst, Algorithm::GreedyTg).unwrap();
            let off = simulate(&p, &inst.network, &SimConfig { seed, trials: 5, ..Default::default() }).unwrap();
            let on = simulate(
                &p,
                &inst.network,
                &SimConfig { seed, trials: 5, overlap_next_batch: true, ..Default::default() },
            )
            .unwrap();
            assert_eq!(off.decoherence_violations, 0);
            // With a single trial mean the batch times are that trial's.
            let one = simulate(&p, &inst.network, &SimConfig { seed, trials: 1, ..Default::default() }).unwrap();
            let sum = one.batch_times.iter().sum::<f64>() + p.segments.iter().sum::<f64>();
            assert!((one.totals[0] - sum).abs() <= 1e-9 * sum);
            for (a, b) in on.totals.iter().zip(&off.totals) {
                assert!(a <= &(b * (1.0 + 1e-12)), "seed {seed}: overlap {a} > {b}");
            }
        }
    }

    #[test]
    fn certain_success_is_not_slower() {
        for seed in 0..3 {
            let base = instance(NetworkParams::default(), seed);
            let sure = Instance::new(
                base.circuit.clone(),
                QuantumNetwork { params: certain(), ..base.network.clone() },
                base.allocation.clone(),
            )
            .unwrap();
            let p = plan(&base, Algorithm::DpTg).unwrap();
            let cfg = SimConfig { seed, trials: 20, ..Default::default() };
            let slow = simulate(&p, &base.network, &cfg).unwrap();
            let fast = simulate(&p, &sure.network, &cfg).unwrap();
            assert!(fast.mean <= slow.mean);
        }
    }

    #[test]
    fn shared_link_is_not_faster_than_alone() {
        let net = line_network(&[10.0], NetworkParams::default());
        let mut c = Circuit::new(4);
        c.push(GateKind::Cz, vec![0, 1]);
        c.push(GateKind::Cz, vec![2, 3]);
        let mut net2 = net.clone();
        net2.nodes[0].memories = vec![0, 2];
        net2.nodes[1].memories = vec![1, 3];
        for n in &mut net2.nodes {
            n.grid_dims = crate::network::grid_dims_for(2);
        }
        let inst = Instance::new(c, net2, Allocation { eta: vec![0, 1, 2, 3] }).unwrap();
        let mut p = plan(&inst, Algorithm::DpTg).unwrap();
        p.schedule = Schedule::from_sets(vec![vec![0, 1]], &p.oracle);
        p.segments = vec![0.0];
        let cfg = SimConfig { seed: 4, trials: 10_000, ..Default::default() };
        let r = simulate(&p, &inst.network, &cfg).unwrap();
        let single = p.tree_of(0).latency();
        // Round-robin on one link: the batch ends at the link's second success.
        assert!((r.batch_times[0] - 2.0 * single).abs() < 0.1 * 2.0 * single, "{} vs {}", r.batch_times[0], single);
    }

    #[test]
    fn decoherence_counts_and_regenerates() {
        // Deadline below the slow EP's latency: the fast one expires while waiting.
        let params = NetworkParams { tau: 1.0, ..Default::default() };
        let net = line_network(&[10.0, 10.0, 10.0, 10.0], params);
        let mut c = Circuit::new(4);
        c.push(GateKind::Cz, vec![0, 1]);
        c.push(GateKind::Cz, vec![2, 3]);
        let inst = Instance::new(c, net, Allocation { eta: vec![0, 1, 2, 4] }).unwrap();
        let mut p = plan(&inst, Algorithm::DpTg).unwrap();
        p.tau = 1e-4;
        let r = simulate(&p, &inst.network, &SimConfig { seed: 1, trials: 50, ..Default::default() }).unwrap();
        assert!(r.decoherence_violations > 0);
        assert!(r.mean.is_finite());
    }

    #[test]
    fn rejects_bad_inputs() {
        let inst = instance(NetworkParams::default(), 1);
        let p = plan(&inst, Algorithm::DpTg).unwrap();
        assert!(matches!(
            simulate(&p, &inst.network, &SimConfig { trials: 0, ..Default::default() }),
            Err(Error::Param(_))
        ));
        let broken = Plan { ep_tree: vec![99; p.eps.len()], ..p };
        assert!(matches!(simulate(&broken, &inst.network, &SimConfig::default()), Err(Error::Plan(_))));
    }

    #[test]
    fn trace_csv_has_one_line_per_event() {
        let inst = instance(NetworkParams::default(), 5);
        let p = plan(&inst, Algorithm::DpTg).unwrap();
        let r =
            simulate(&p, &inst.network, &SimConfig { trials: 2, record_trace: true, ..Default::default() }).unwrap();
        let traces = r.traces.unwrap();
        let mut out = Vec::new();
        write_trace(&traces, &mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert_eq!(text.lines().count(), 1 + traces.iter().map(Vec::len).sum::<usize>());
        assert!(text.starts_with("trial,time,kind,subject,outcome\n"));
    }

    #[test]
    fn stddev_is_sample_based() {
        let (m, s) = mean_stddev(&[1.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!((s - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(mean_stddev(&[5.0]), (5.0, 0.0));
    }
}
