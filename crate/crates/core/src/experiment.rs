//! Experiment driver: instance generation per seed, every algorithm on a
//! shared allocation, simulation, CSV rows and grouped plot data.

use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::circuit::{
    generate_benchmark, generate_random_circuit, Benchmark, BinaryKind, Circuit, RandomCircuitParams,
};
use crate::error::{Error, Result};
use crate::network::{default_exec_capacity, generate_waxman, NetworkParams, QuantumNetwork, WaxmanParams};
use crate::pipeline::{plan, Algorithm, Instance};
use crate::sim::{mean_stddev, simulate, SimConfig};

/// Added to a seed to derive the network's generator seed.
const NETWORK_SEED_OFFSET: u64 = 0x9E37_79B9_7F4A_7C15;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum CircuitSpec {
    Random {
        #[serde(default = "default_qubits")]
        num_qubits: usize,
        #[serde(default = "default_gates_per_qubit")]
        gates_per_qubit: usize,
        #[serde(default = "default_binary_fraction")]
        binary_fraction: f64,
        #[serde(default = "default_binary_kind")]
        binary_kind: BinaryKind,
    },
    Benchmark {
        benchmark: Benchmark,
        num_qubits: usize,
        /// Convert CNOTs to CZ form before planning.
        #[serde(default)]
        cz: bool,
    },
    File {
        path: PathBuf,
    },
}

fn default_qubits() -> usize {
    50
}

fn default_gates_per_qubit() -> usize {
    50
}

fn default_binary_fraction() -> f64 {
    0.5
}

fn default_binary_kind() -> BinaryKind {
    BinaryKind::Cz
}

impl Default for CircuitSpec {
    fn default() -> Self {
        CircuitSpec::Random {
            num_qubits: default_qubits(),
            gates_per_qubit: default_gates_per_qubit(),
            binary_fraction: default_binary_fraction(),
            binary_kind: default_binary_kind(),
        }
    }
}

/// Waxman network parameters, or a network file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkSpec {
    pub file: Option<PathBuf>,
    pub num_nodes: usize,
    pub area_km: f64,
    pub beta: f64,
    pub alpha: f64,
    /// Total data memories; the circuit's qubit count when absent.
    pub data_memories: Option<usize>,
    pub exec_memory_capacity: usize,
}

impl Default for NetworkSpec {
    fn default() -> Self {
        let w = WaxmanParams::default();
        NetworkSpec {
            file: None,
            num_nodes: w.num_nodes,
            area_km: w.area_km,
            beta: w.beta,
            alpha: w.alpha,
            data_memories: None,
            exec_memory_capacity: default_exec_capacity(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepVariable {
    NumQubits,
    NumNodes,
    GatesPerQubit,
    BinaryFraction,
    Tau,
    PSwap,
}

impl SweepVariable {
    pub fn name(self) -> &'static str {
        match self {
            SweepVariable::NumQubits => "num_qubits",
            SweepVariable::NumNodes => "num_nodes",
            SweepVariable::GatesPerQubit => "gates_per_qubit",
            SweepVariable::BinaryFraction => "binary_fraction",
            SweepVariable::Tau => "tau",
            SweepVariable::PSwap => "p_swap",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    pub variable: SweepVariable,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub circuit: CircuitSpec,
    pub network: NetworkSpec,
    pub params: NetworkParams,
    pub algorithms: Vec<Algorithm>,
    pub seeds: Vec<u64>,
    pub trials: usize,
    pub overlap_next_batch: bool,
    pub sweep: Option<Sweep>,
    pub output: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            circuit: CircuitSpec::default(),
            network: NetworkSpec::default(),
            params: NetworkParams::default(),
            algorithms: Algorithm::ALL.to_vec(),
            seeds: (1..=5).collect(),
            trials: 100,
            overlap_next_batch: false,
            sweep: None,
            output: None,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(s: &str) -> Result<Self> {
        let config: ExperimentConfig = toml::from_str(s).map_err(|e| Error::Parse(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut config = Self::from_toml(&std::fs::read_to_string(path)?)?;
        // Relative file references are resolved against the config's directory.
        let dir = path.parent().unwrap_or(Path::new(""));
        if let CircuitSpec::File { path } = &mut config.circuit {
            *path = dir.join(&*path);
        }
        if let Some(f) = &mut config.network.file {
            *f = dir.join(&*f);
        }
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.algorithms.is_empty() {
            return Err(Error::Param("at least one algorithm is required".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Param("at least one seed is required".into()));
        }
        if self.trials == 0 {
            return Err(Error::Param("at least one simulation trial is required".into()));
        }
        if let Some(s) = &self.sweep {
            if s.values.is_empty() {
                return Err(Error::Param("sweep has no values".into()));
            }
            let random = matches!(self.circuit, CircuitSpec::Random { .. });
            let conflict = match s.variable {
                SweepVariable::GatesPerQubit | SweepVariable::BinaryFraction => !random,
                SweepVariable::NumQubits => matches!(self.circuit, CircuitSpec::File { .. }),
                SweepVariable::NumNodes => self.network.file.is_some(),
                SweepVariable::Tau | SweepVariable::PSwap => false,
            };
            if conflict {
                return Err(Error::Param(format!(
                    "cannot sweep {} with this circuit/network source",
                    s.variable.name()
                )));
            }
        }
        self.params.validate()
    }

    /// The configuration at one sweep point.
    pub fn at(&self, variable: SweepVariable, value: f64) -> Result<Self> {
        let mut c = self.clone();
        c.sweep = None;
        let count = || -> Result<usize> {
            if value >= 0.0 && value.fract() == 0.0 {
                Ok(value as usize)
            } else {
                Err(Error::Param(format!("{} must be a non-negative integer, got {value}", variable.name())))
            }
        };
        match (variable, &mut c.circuit) {
            (
                SweepVariable::NumQubits,
                CircuitSpec::Random { num_qubits, .. } | CircuitSpec::Benchmark { num_qubits, .. },
            ) => *num_qubits = count()?,
            (SweepVariable::GatesPerQubit, CircuitSpec::Random { gates_per_qubit, .. }) => *gates_per_qubit = count()?,
            (SweepVariable::BinaryFraction, CircuitSpec::Random { binary_fraction, .. }) => *binary_fraction = value,
            (SweepVariable::NumNodes, _) => c.network.num_nodes = count()?,
            (SweepVariable::Tau, _) => c.params.tau = value,
            (SweepVariable::PSwap, _) => c.params.p_swap = value,
            (v, _) => return Err(Error::Param(format!("cannot sweep {} with this circuit source", v.name()))),
        }
        c.params.validate()?;
        Ok(c)
    }

    pub fn build_circuit(&self, seed: u64) -> Result<Circuit> {
        match &self.circuit {
            &CircuitSpec::Random { num_qubits, gates_per_qubit, binary_fraction, binary_kind } => {
                generate_random_circuit(
                    &RandomCircuitParams { num_qubits, gates_per_qubit, binary_fraction, binary_kind },
                    seed,
                )
            }
            &CircuitSpec::Benchmark { benchmark, num_qubits, cz } => {
                let c = generate_benchmark(benchmark, num_qubits)?;
                Ok(if cz { crate::circuit::cnot_to_cz(&c) } else { c })
            }
            CircuitSpec::File { path } => Circuit::from_json(&std::fs::read_to_string(path)?),
        }
    }

    pub fn build_network(&self, num_qubits: usize, seed: u64) -> Result<QuantumNetwork> {
        let mut net = match &self.network.file {
            Some(path) => QuantumNetwork::from_json(&std::fs::read_to_string(path)?)?,
            None => {
                let n = &self.network;
                let wp = WaxmanParams {
                    num_nodes: n.num_nodes,
                    area_km: n.area_km,
                    beta: n.beta,
                    alpha: n.alpha,
                    total_data_memories: n.data_memories.unwrap_or(num_qubits),
                    exec_memory_capacity: n.exec_memory_capacity,
                };
                generate_waxman(&wp, self.params.clone(), seed.wrapping_add(NETWORK_SEED_OFFSET))?
            }
        };
        net.params = self.params.clone();
        Ok(net)
    }

    /// Circuit, network and shared allocation of one seed.
    pub fn build_instance(&self, seed: u64) -> Result<Instance> {
        let circuit = self.build_circuit(seed)?;
        let network = self.build_network(circuit.num_qubits, seed)?;
        Instance::allocate(circuit, network)
    }
}

/// One (sweep point, seed, algorithm) result. Optional fields are empty for
/// failed cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub sweep_variable: String,
    pub sweep_value: Option<f64>,
    pub algorithm: Algorithm,
    pub seed: u64,
    /// `ok`, `infeasible` or `error`.
    pub status: String,
    pub analytic_total: Option<f64>,
    pub sim_mean: Option<f64>,
    pub sim_stddev: Option<f64>,
    pub num_eps: Option<usize>,
    pub num_batches: Option<usize>,
    pub num_remote_gates: Option<usize>,
    pub num_ces: Option<usize>,
    pub allocation_cost: Option<f64>,
    pub decoherence_violations: Option<usize>,
    pub diagnostic: String,
    /// Excluded from reproducibility comparisons.
    pub wall_clock_s: f64,
}

impl Row {
    fn failed(point: &Point, algorithm: Algorithm, seed: u64, err: &Error) -> Self {
        let status = if matches!(err, Error::Infeasible { .. }) { "infeasible" } else { "error" };
        Row {
            sweep_variable: point.variable.clone(),
            sweep_value: point.value,
            algorithm,
            seed,
            status: status.into(),
            analytic_total: None,
            sim_mean: None,
            sim_stddev: None,
            num_eps: None,
            num_batches: None,
            num_remote_gates: None,
            num_ces: None,
            allocation_cost: None,
            decoherence_violations: None,
            diagnostic: err.to_string(),
            wall_clock_s: 0.0,
        }
    }

    pub fn is_ok(&self) -> bool {
        self.status == "ok"
    }
}

struct Point {
    variable: String,
    value: Option<f64>,
    config: ExperimentConfig,
}

fn run_algorithm(point: &Point, instance: &Instance, algorithm: Algorithm, seed: u64) -> Result<Row> {
    let started = Instant::now();
    let p = plan(instance, algorithm)?;
    let report = p.validate();
    if !report.is_valid() {
        return Err(Error::Plan(format!("schedule failed validation: {:?}", report.violations)));
    }
    let sim = simulate(
        &p,
        &instance.network,
        &SimConfig {
            seed,
            trials: point.config.trials,
            overlap_next_batch: point.config.overlap_next_batch,
            record_trace: false,
        },
    )?;
    Ok(Row {
        sweep_variable: point.variable.clone(),
        sweep_value: point.value,
        algorithm,
        seed,
        status: "ok".into(),
        analytic_total: Some(p.analytic_total()),
        sim_mean: Some(sim.mean),
        sim_stddev: Some(sim.stddev),
        num_eps: Some(p.eps.len()),
        num_batches: Some(p.schedule.batches.len()),
        num_remote_gates: Some(p.num_remote_gates),
        num_ces: p.num_ces,
        allocation_cost: Some(instance.allocation_cost),
        decoherence_violations: Some(sim.decoherence_violations),
        diagnostic: String::new(),
        wall_clock_s: started.elapsed().as_secs_f64(),
    })
}

/// Runs every (sweep point, seed, algorithm) cell. Rows are sorted by sweep
/// value, seed and algorithm.
pub fn run_experiment(config: &ExperimentConfig) -> Result<Vec<Row>> {
    config.validate()?;
    let points = match &config.sweep {
        None => vec![Point { variable: String::new(), value: None, config: config.clone() }],
        Some(s) => s
            .values
            .iter()
            .map(|&v| {
                Ok(Point { variable: s.variable.name().into(), value: Some(v), config: config.at(s.variable, v)? })
            })
            .collect::<Result<_>>()?,
    };
    let cells: Vec<(&Point, u64)> = points.iter().flat_map(|p| config.seeds.iter().map(move |&s| (p, s))).collect();
    let mut rows: Vec<Row> = cells
        .par_iter()
        .flat_map_iter(|&(point, seed)| match point.config.build_instance(seed) {
            Ok(instance) => config
                .algorithms
                .iter()
                .map(|&a| run_algorithm(point, &instance, a, seed).unwrap_or_else(|e| Row::failed(point, a, seed, &e)))
                .collect::<Vec<_>>(),
            Err(e) => config.algorithms.iter().map(|&a| Row::failed(point, a, seed, &e)).collect(),
        })
        .collect();
    rows.sort_by(|a, b| {
        a.sweep_value
            .unwrap_or(f64::NEG_INFINITY)
            .total_cmp(&b.sweep_value.unwrap_or(f64::NEG_INFINITY))
            .then(a.seed.cmp(&b.seed))
            .then(a.algorithm.cmp(&b.algorithm))
    });
    Ok(rows)
}

pub fn write_csv(rows: &[Row], out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    if rows.is_empty() {
        w.write_record(ROW_HEADER)?;
    }
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv(input: impl Read) -> Result<Vec<Row>> {
    csv::Reader::from_reader(input).deserialize().map(|r| r.map_err(Error::from)).collect()
}

const ROW_HEADER: [&str; 16] = [
    "sweep_variable",
    "sweep_value",
    "algorithm",
    "seed",
    "status",
    "analytic_total",
    "sim_mean",
    "sim_stddev",
    "num_eps",
    "num_batches",
    "num_remote_gates",
    "num_ces",
    "allocation_cost",
    "decoherence_violations",
    "diagnostic",
    "wall_clock_s",
];

/// Aggregate over seeds of one algorithm at one sweep value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotPoint {
    pub algorithm: Algorithm,
    pub sweep_value: f64,
    /// Mean and sample deviation of the analytic total time.
    pub mean: f64,
    pub stddev: f64,
    /// Mean simulated execution time.
    pub sim_mean: f64,
    pub count: usize,
}

/// One series per algorithm of successful rows, points ordered by sweep
/// value. Rows without a sweep get sweep value 0.
pub fn emit_plot_data(rows: &[Row], sweep_variable: &str) -> Result<Vec<PlotPoint>> {
    if let Some(r) = rows.iter().find(|r| r.sweep_variable != sweep_variable) {
        return Err(Error::Param(format!("mixed sweeps: expected {sweep_variable:?}, found {:?}", r.sweep_variable)));
    }
    // (algorithm, ordered sweep key) -> (sweep value, analytic totals, simulated means)
    type Group = (f64, Vec<f64>, Vec<f64>);
    let mut groups: std::collections::BTreeMap<(Algorithm, u64), Group> = Default::default();
    for r in rows.iter().filter(|r| r.is_ok()) {
        let x = r.sweep_value.unwrap_or(0.0);
        // Order-preserving integer key of the sweep value.
        let key = (r.algorithm, x.to_bits() ^ if x.is_sign_negative() { u64::MAX } else { 1 << 63 });
        let g = groups.entry(key).or_insert_with(|| (x, Vec::new(), Vec::new()));
        g.1.extend(r.analytic_total);
        g.2.extend(r.sim_mean);
    }
    Ok(groups
        .into_iter()
        .map(|((algorithm, _), (sweep_value, totals, sims))| {
            let (mean, stddev) = mean_stddev(&totals);
            PlotPoint { algorithm, sweep_value, mean, stddev, sim_mean: mean_stddev(&sims).0, count: totals.len() }
        })
        .collect())
}

pub fn write_plot_data(points: &[PlotPoint], out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    if points.is_empty() {
        w.write_record(["algorithm", "sweep_value", "mean", "stddev", "sim_mean", "count"])?;
    }
    for p in points {
        w.serialize(p)?;
    }
    w.flush()?;
    Ok(())
}
