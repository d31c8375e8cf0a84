//! End-to-end acceptance criteria. Each test prints one `PASS`/`FAIL` line
//! straight to stderr so the verdicts show up without `--nocapture`.

use std::io::Write;
use std::time::{Duration, Instant};

use qdist_core::allocation::{allocate, allocate_exact, random_allocation, Allocation, EXACT_LIMIT};
use qdist_core::catent::{dsvc_greedy, DsvcGraph};
use qdist_core::circuit::{generate_random_circuit, Circuit, RandomCircuitParams};
use qdist_core::entanglement::{batch_latency, EpDemand, Origin, RouteTable};
use qdist_core::error::Error;
use qdist_core::experiment::{run_experiment, ExperimentConfig};
use qdist_core::network::{generate_waxman, link_ep_params, NetworkParams, QuantumNetwork, WaxmanParams};
use qdist_core::pipeline::{plan, Algorithm, Instance, Plan};
use qdist_core::scheduling::{brute_force_schedule, dp_schedule, ConsumptionOrder, LatencyOracle, SharedLatency};
use qdist_core::sim::{calibrate, simulate, SimConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn report(id: u32, name: &str, pass: bool, detail: &str) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    let _ = writeln!(std::io::stderr(), "acceptance {id:2} {verdict} {name}: {detail}");
    assert!(pass, "criterion {id} ({name}) failed: {detail}");
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn waxman(rng: &mut ChaCha8Rng, nodes: std::ops::RangeInclusive<usize>) -> QuantumNetwork {
    let wp = WaxmanParams { num_nodes: rng.random_range(nodes), ..WaxmanParams::default() };
    generate_waxman(&wp, NetworkParams::default(), rng.random()).unwrap()
}

fn random_pair(rng: &mut ChaCha8Rng, n: usize) -> (usize, usize) {
    let a = rng.random_range(0..n);
    (a, (a + rng.random_range(1..n)) % n)
}

/// Default-size instance: 50 qubits, 2500 gates (half CZ), 10 Waxman nodes.
fn default_instance(seed: u64) -> Instance {
    let circuit = generate_random_circuit(&RandomCircuitParams::default(), seed).unwrap();
    let network = generate_waxman(&WaxmanParams::default(), NetworkParams::default(), seed).unwrap();
    Instance::allocate(circuit, network).unwrap()
}

fn plans(inst: &Instance) -> Vec<Plan> {
    Algorithm::ALL.iter().map(|&a| plan(inst, a).unwrap()).collect()
}

fn total(plans: &[Plan], a: Algorithm) -> f64 {
    plans.iter().find(|p| p.algorithm == a).unwrap().analytic_total()
}

/// Minimum total over all contiguous partitions of a totally ordered EP
/// sequence, batches no longer than `tau`.
fn contiguous_optimum(oracle: &dyn LatencyOracle, tau: f64) -> f64 {
    let m = oracle.num_eps();
    let mut best = f64::INFINITY;
    for cuts in 0u32..1 << (m - 1) {
        let mut sum = 0.0;
        let mut start = 0;
        let mut feasible = true;
        for end in 1..=m {
            if end == m || cuts >> (end - 1) & 1 == 1 {
                let l = oracle.latency_of(&(start..end).collect::<Vec<_>>());
                feasible &= l <= tau;
                sum += l;
                start = end;
            }
        }
        if feasible {
            best = best.min(sum);
        }
    }
    best
}

#[test]
fn c01_dp_optimal_on_total_orders() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let (mut mismatches, mut oracle_mismatches) = (0, 0);
    let instances = 200;
    for _ in 0..instances {
        let m = rng.random_range(1..=12);
        let net = waxman(&mut rng, 3..=8);
        let routes = RouteTable::build(&net).unwrap();
        let eps: Vec<_> = (0..m).map(|_| random_pair(&mut rng, net.num_nodes())).collect();
        let oracle = SharedLatency::new(&routes, &eps).unwrap();
        // Between the slowest single EP and the whole set, so the deadline binds.
        let max = (0..m).map(|e| oracle.singleton(e)).fold(0.0, f64::max);
        let all = oracle.latency_of(&(0..m).collect::<Vec<_>>());
        let tau = max + rng.random::<f64>() * (all - max);
        let order = ConsumptionOrder::total(m);
        let dp = dp_schedule(&order, tau, &oracle).unwrap().total_latency;
        let bf = brute_force_schedule(&order, tau, &oracle, 12).unwrap().total_latency;
        mismatches += usize::from(dp != bf);
        oracle_mismatches += usize::from(dp != contiguous_optimum(&oracle, tau));
    }
    let elapsed = start.elapsed();
    report(
        1,
        "DP optimal on total orders",
        mismatches == 0 && oracle_mismatches == 0 && elapsed < Duration::from_secs(60),
        &format!(
            "{instances} instances, {mismatches} brute-force and {oracle_mismatches} partition-enumeration mismatches, {elapsed:.1?}"
        ),
    );
}

#[test]
fn c02_schedules_valid_on_default_instances() {
    let instances = 100;
    let (mut emitted, mut violations) = (0, 0);
    let (mut invalid, mut infeasible, mut errors) = (Vec::new(), Vec::new(), Vec::new());
    for seed in 1..=instances {
        let inst = default_instance(seed);
        for algorithm in Algorithm::ALL {
            match plan(&inst, algorithm) {
                Ok(p) => {
                    emitted += 1;
                    let r = p.validate();
                    if !r.is_valid() {
                        violations += r.violations.len();
                        invalid.push((seed, algorithm));
                    }
                }
                // No schedule exists: one EP alone outlives the deadline.
                Err(Error::Infeasible { latency, tau, .. }) if latency > tau => infeasible.push((seed, algorithm)),
                Err(e) => errors.push((seed, algorithm, e.to_string())),
            }
        }
    }
    report(
        2,
        "no-wait and deadline feasibility",
        violations == 0 && errors.is_empty(),
        &format!(
            "{instances} instances x {} algorithms, {emitted} schedules, {violations} violations {invalid:?}; \
             singleton over deadline (no schedule) {infeasible:?}; other errors {errors:?}",
            Algorithm::ALL.len()
        ),
    );
}

/// Best density over all nonempty vertex subsets.
fn densest(g: &DsvcGraph) -> f64 {
    let n = g.num_vertices();
    (1u32..1 << n)
        .map(|mask| g.density(&(0..n).filter(|&v| mask >> v & 1 == 1).collect::<Vec<_>>()))
        .fold(0.0, f64::max)
}

#[test]
fn c03_dsvc_greedy_half_optimal() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let graphs = 200;
    let mut failures = 0;
    let mut worst = f64::INFINITY;
    for _ in 0..graphs {
        let n = rng.random_range(1..=12);
        let edge_p = rng.random_range(0.1..0.9);
        let mut edges = Vec::new();
        for u in 0..n {
            for v in u + 1..n {
                if rng.random_bool(edge_p) {
                    edges.push((u, v, rng.random_range(1..10)));
                }
            }
        }
        let g = DsvcGraph {
            vertices: (0..n).collect(),
            weight: (0..n).map(|_| rng.random_range(0..6)).collect(),
            cost: (0..n).map(|_| rng.random_range(0.1..5.0)).collect(),
            edges,
        };
        let opt = densest(&g);
        let got = g.density(&dsvc_greedy(&g));
        if opt > 0.0 {
            worst = worst.min(got / opt);
        }
        failures += usize::from(got < 0.5 * opt);
    }
    let elapsed = start.elapsed();
    report(
        3,
        "DSVC greedy within half of optimum",
        failures == 0 && elapsed < Duration::from_secs(60),
        &format!("{graphs} graphs, {failures} failures, worst ratio {worst:.3}, {elapsed:.1?}"),
    );
}

#[test]
fn c04_relaxed_triangle_inequality() {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let (mut triples, mut violations) = (0, 0);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let net = waxman(&mut rng, 3..=15);
        let routes = RouteTable::build(&net).unwrap();
        let factor = 3.0 / (2.0 * net.params.p_swap);
        let n = net.num_nodes();
        for a in 0..n {
            for b in (0..n).filter(|&b| b != a) {
                for c in (0..n).filter(|&c| c != a && c != b) {
                    let bound = factor * (routes.ep_latency(a, b) + routes.ep_latency(b, c));
                    let l = routes.ep_latency(a, c);
                    worst = worst.max(l / bound);
                    violations += usize::from(l > bound);
                    triples += 1;
                }
            }
        }
    }
    report(
        4,
        "relaxed triangle inequality",
        violations == 0,
        &format!("20 networks, {triples} triples, {violations} violations, max ratio to bound {worst:.3}"),
    );
}

#[test]
fn c05_batch_subadditive() {
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let sets = 1000;
    let mut violations = 0;
    for chunk in 0..sets / 20 {
        let net = waxman(&mut rng, 3..=12);
        let routes = RouteTable::build(&net).unwrap();
        for _ in 0..20 {
            let demands: Vec<EpDemand> = (0..rng.random_range(1..=15))
                .map(|i| {
                    let (src, dst) = random_pair(&mut rng, net.num_nodes());
                    EpDemand { src, dst, multiplicity: rng.random_range(1..=3), origin: Origin::Gate(chunk * 100 + i) }
                })
                .collect();
            let independent: f64 =
                demands.iter().map(|d| d.multiplicity as f64 * routes.ep_latency(d.src, d.dst)).sum();
            let batch = batch_latency(&routes, &demands).unwrap().makespan;
            violations += usize::from(batch > independent * (1.0 + 1e-12));
        }
    }
    report(5, "batch latency subadditive", violations == 0, &format!("{sets} demand sets, {violations} violations"));
}

#[test]
fn c06_simulator_calibration() {
    let mut rng = ChaCha8Rng::seed_from_u64(606);
    let trials = 10_000;
    let mut worst = 0.0f64;
    for _ in 0..10 {
        let net = waxman(&mut rng, 3..=10);
        let link = &net.links[rng.random_range(0..net.links.len())];
        let lp = link_ep_params(link, &net.params);
        let expected = lp.attempt_latency / lp.attempt_success;
        let routes = RouteTable::build(&net).unwrap();
        let row = &calibrate(&net, &routes, &[(link.a, link.b)], trials, rng.random()).unwrap()[0];
        worst = worst.max((row.simulated / expected - 1.0).abs());
    }

    let inst = default_instance(6);
    let p = plan(&inst, Algorithm::DpCe).unwrap();
    let config = SimConfig { seed: 17, trials: 20, ..SimConfig::default() };
    let first = simulate(&p, &inst.network, &config).unwrap();
    let second = simulate(&p, &inst.network, &config).unwrap();
    let identical = first.totals.iter().map(|t| t.to_bits()).eq(second.totals.iter().map(|t| t.to_bits()))
        && first.ep_latencies.iter().map(|t| t.to_bits()).eq(second.ep_latencies.iter().map(|t| t.to_bits()));

    report(
        6,
        "simulator calibration and determinism",
        worst <= 0.10 && identical,
        &format!(
            "10 links x {trials} trials, max relative error {:.2}%, repeat run bit-identical: {identical}",
            100.0 * worst
        ),
    );
}

fn cost(circuit: &Circuit, network: &QuantumNetwork, alloc: Allocation) -> f64 {
    Instance::new(circuit.clone(), network.clone(), alloc).unwrap().allocation_cost
}

#[test]
fn c07_allocation_quality() {
    let mut rng = ChaCha8Rng::seed_from_u64(707);
    let small = 50;
    let mut worst_exact = 0.0f64;
    let mut exact_failures = 0;
    for _ in 0..small {
        let memories = rng.random_range(3..=EXACT_LIMIT);
        let qubits = rng.random_range(2..=memories);
        let params = RandomCircuitParams { num_qubits: qubits, gates_per_qubit: 10, ..RandomCircuitParams::default() };
        let circuit = generate_random_circuit(&params, rng.random()).unwrap();
        let wp = WaxmanParams {
            num_nodes: rng.random_range(2..=4),
            total_data_memories: memories,
            ..WaxmanParams::default()
        };
        let net = generate_waxman(&wp, NetworkParams::default(), rng.random()).unwrap();
        let routes = RouteTable::build(&net).unwrap();
        let heuristic = cost(&circuit, &net, allocate(&circuit, &net, &routes).unwrap());
        let exact = cost(&circuit, &net, allocate_exact(&circuit, &net, &routes, EXACT_LIMIT).unwrap());
        if exact > 0.0 {
            worst_exact = worst_exact.max(heuristic / exact);
        }
        exact_failures += usize::from(heuristic > 1.25 * exact + 1e-12);
    }

    let large = 20;
    let mut random_failures = 0;
    let mut worst_random = 0.0f64;
    for seed in 1..=large {
        let inst = default_instance(seed);
        let memories = inst.network.num_memories();
        let med = median(
            (0..20)
                .map(|i| {
                    let a = random_allocation(inst.circuit.num_qubits, memories, seed * 1000 + i).unwrap();
                    cost(&inst.circuit, &inst.network, a)
                })
                .collect(),
        );
        worst_random = worst_random.max(inst.allocation_cost / med);
        random_failures += usize::from(inst.allocation_cost > med);
    }
    report(
        7,
        "allocation quality",
        exact_failures == 0 && random_failures == 0,
        &format!(
            "{small} small: {exact_failures} over 1.25x exact (worst {worst_exact:.3}x); \
             {large} default: {random_failures} above random median (worst {worst_random:.3}x)"
        ),
    );
}

#[test]
fn c08_ce_benefit_on_cz_circuits() {
    let seeds = 20;
    let (mut ce, mut tg) = (Vec::new(), Vec::new());
    let (mut over, mut strict) = (0, 0);
    for seed in 1..=seeds {
        let inst = default_instance(seed);
        let greedy_ce = plan(&inst, Algorithm::GreedyCe).unwrap();
        let greedy_tg = plan(&inst, Algorithm::GreedyTg).unwrap();
        ce.push(greedy_ce.analytic_total());
        tg.push(greedy_tg.analytic_total());
        let demands = greedy_ce.demands.len();
        over += usize::from(demands > greedy_ce.num_remote_gates);
        strict += usize::from(demands < greedy_ce.num_remote_gates);
    }
    let (ce, tg) = (median(ce), median(tg));
    report(
        8,
        "cat-entanglement benefit on CZ circuits",
        ce <= tg && over == 0 && 2 * strict >= seeds as usize,
        &format!(
            "{seeds} seeds, median Greedy-CE {ce:.3} s vs Greedy-TG {tg:.3} s; \
             demands exceed remote gates on {over}, strictly fewer on {strict}"
        ),
    );
}

#[test]
fn c09_beats_disjoint_paths_baseline() {
    let seeds = 20;
    let (mut best, mut baseline) = (Vec::new(), Vec::new());
    for seed in 1..=seeds {
        let ps = plans(&default_instance(seed));
        let ours = [Algorithm::GreedyTg, Algorithm::DpTg, Algorithm::GreedyCe, Algorithm::DpCe];
        best.push(ours.iter().map(|&a| total(&ps, a)).fold(f64::INFINITY, f64::min));
        baseline.push(total(&ps, Algorithm::DisjointPaths));
    }
    let (best, baseline) = (median(best), median(baseline));
    report(
        9,
        "better than the disjoint-paths baseline",
        best <= baseline,
        &format!(
            "{seeds} seeds, median best {best:.3} s vs baseline {baseline:.3} s ({:.0}% lower)",
            100.0 * (1.0 - best / baseline)
        ),
    );
}

#[test]
fn c10_default_experiment_scale() {
    let start = Instant::now();
    let rows = run_experiment(&ExperimentConfig::default()).unwrap();
    let elapsed = start.elapsed();
    let failed = rows.iter().filter(|r| !r.is_ok()).count();
    let expected = Algorithm::ALL.len() * 5;
    report(
        10,
        "default experiment scale",
        rows.len() == expected && failed == 0 && elapsed < Duration::from_secs(300),
        &format!("{} rows ({failed} failed) in {elapsed:.1?}", rows.len()),
    );
}
