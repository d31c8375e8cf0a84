use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use qdist_core::allocation::{allocate, allocate_exact, Allocation, Placement, EXACT_LIMIT};
use qdist_core::circuit::{Benchmark, BinaryKind, Circuit};
use qdist_core::entanglement::RouteTable;
use qdist_core::experiment::{
    emit_plot_data, run_experiment, write_csv, write_plot_data, CircuitSpec, ExperimentConfig,
};
use qdist_core::network::QuantumNetwork;
use qdist_core::pipeline::{plan, Algorithm, Instance};
use qdist_core::sim::{simulate, write_trace, SimConfig};
use serde::{Deserialize, Serialize};

#[derive(Parser)]
#[command(name = "qdist", version, about = "Distribute quantum circuits over quantum networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment configuration (TOML); supplies circuit, network and parameter settings.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Output file; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct InstanceArgs {
    /// Circuit JSON file.
    #[arg(long)]
    circuit: PathBuf,
    /// Network JSON file.
    #[arg(long)]
    network: PathBuf,
    /// Allocation JSON file; computed with the heuristic when absent.
    #[arg(long)]
    allocation: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a random or benchmark circuit as JSON.
    GenerateCircuit {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        qubits: Option<usize>,
        #[arg(long)]
        gates_per_qubit: Option<usize>,
        #[arg(long)]
        binary_fraction: Option<f64>,
        /// Two-qubit gate kind of random circuits: cnot or cz.
        #[arg(long)]
        kind: Option<String>,
        /// Benchmark instead of a random circuit: ghz, qft or qpe.
        #[arg(long)]
        benchmark: Option<String>,
    },
    /// Generate a Waxman network as JSON.
    GenerateNetwork {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        nodes: Option<usize>,
        /// Total data memories.
        #[arg(long)]
        memories: Option<usize>,
        #[arg(long)]
        area_km: Option<f64>,
    },
    /// Place circuit qubits on network memories.
    Allocate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        circuit: PathBuf,
        #[arg(long)]
        network: PathBuf,
        /// Exhaustive search (small instances only).
        #[arg(long)]
        exact: bool,
    },
    /// Plan EP generation batches with one algorithm.
    Schedule {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        instance: InstanceArgs,
        #[arg(long, default_value = "Greedy-CE")]
        algorithm: String,
    },
    /// Simulate a planned execution.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        instance: InstanceArgs,
        #[arg(long, default_value = "Greedy-CE")]
        algorithm: String,
        #[arg(long, default_value_t = 100)]
        trials: usize,
        /// Execute each batch's gates during the next batch's generation.
        #[arg(long)]
        overlap: bool,
        /// Write an event trace (CSV) of every trial to this file.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Run an experiment and write CSV rows.
    Experiment {
        #[command(flatten)]
        common: Common,
        /// Use only this seed instead of the configured list.
        #[arg(long)]
        only_seed: bool,
        /// Also write grouped plot data to this file.
        #[arg(long)]
        plot: Option<PathBuf>,
    },
}

#[derive(Serialize, Deserialize)]
struct AllocationFile {
    cost: f64,
    placements: Vec<Placement>,
}

fn write_out(out: Option<&Path>, body: &[u8]) -> Result<()> {
    match out {
        Some(p) => fs::write(p, body).with_context(|| format!("writing {}", p.display())),
        None => std::io::stdout().write_all(body).context("writing standard output"),
    }
}

fn write_json(out: Option<&Path>, value: &impl Serialize) -> Result<()> {
    let mut body = serde_json::to_vec_pretty(value)?;
    body.push(b'\n');
    write_out(out, &body)
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn load_config(common: &Common) -> Result<ExperimentConfig> {
    match &common.config {
        Some(p) => ExperimentConfig::load(p).with_context(|| format!("loading {}", p.display())),
        None => Ok(ExperimentConfig::default()),
    }
}

fn load_instance(args: &InstanceArgs) -> Result<Instance> {
    let circuit = Circuit::from_json(&read(&args.circuit)?)?;
    let network = QuantumNetwork::from_json(&read(&args.network)?)?;
    Ok(match &args.allocation {
        Some(p) => {
            let file: AllocationFile = serde_json::from_str(&read(p)?)?;
            Instance::new(circuit, network, Allocation::from_placements(file.placements)?)?
        }
        None => Instance::allocate(circuit, network)?,
    })
}

fn generate_circuit(
    common: &Common,
    qubits: Option<usize>,
    gates_per_qubit: Option<usize>,
    binary_fraction: Option<f64>,
    kind: Option<&str>,
    benchmark: Option<&str>,
) -> Result<()> {
    let mut config = load_config(common)?;
    if let Some(b) = benchmark {
        let benchmark: Benchmark = b.parse()?;
        let n = qubits.context("--benchmark needs --qubits")?;
        config.circuit = CircuitSpec::Benchmark { benchmark, num_qubits: n, cz: kind == Some("cz") };
    } else if let CircuitSpec::Random { num_qubits, gates_per_qubit: g, binary_fraction: f, binary_kind } =
        &mut config.circuit
    {
        *num_qubits = qubits.unwrap_or(*num_qubits);
        *g = gates_per_qubit.unwrap_or(*g);
        *f = binary_fraction.unwrap_or(*f);
        *binary_kind = match kind {
            None => *binary_kind,
            Some("cnot") => BinaryKind::Cnot,
            Some("cz") => BinaryKind::Cz,
            Some(k) => bail!("unknown gate kind {k:?}; expected cnot or cz"),
        };
    } else if qubits.is_some() || gates_per_qubit.is_some() || binary_fraction.is_some() || kind.is_some() {
        bail!("circuit flags only apply to random circuits");
    }
    let circuit = config.build_circuit(common.seed)?;
    write_out(common.out.as_deref(), format!("{}\n", circuit.to_json()?).as_bytes())
}

fn generate_network(
    common: &Common,
    nodes: Option<usize>,
    memories: Option<usize>,
    area_km: Option<f64>,
) -> Result<()> {
    let mut config = load_config(common)?;
    let n = &mut config.network;
    n.num_nodes = nodes.unwrap_or(n.num_nodes);
    n.area_km = area_km.unwrap_or(n.area_km);
    n.data_memories = memories.or(n.data_memories);
    let qubits = match &config.circuit {
        CircuitSpec::Random { num_qubits, .. } | CircuitSpec::Benchmark { num_qubits, .. } => *num_qubits,
        CircuitSpec::File { .. } => config.build_circuit(common.seed)?.num_qubits,
    };
    let net = config.build_network(qubits, common.seed)?;
    write_out(common.out.as_deref(), format!("{}\n", net.to_json()?).as_bytes())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenerateCircuit { common, qubits, gates_per_qubit, binary_fraction, kind, benchmark } => {
            generate_circuit(&common, qubits, gates_per_qubit, binary_fraction, kind.as_deref(), benchmark.as_deref())
        }
        Command::GenerateNetwork { common, nodes, memories, area_km } => {
            generate_network(&common, nodes, memories, area_km)
        }
        Command::Allocate { common, circuit, network, exact } => {
            let circuit = Circuit::from_json(&read(&circuit)?)?;
            let network = QuantumNetwork::from_json(&read(&network)?)?;
            let routes = RouteTable::build(&network)?;
            let alloc = if exact {
                allocate_exact(&circuit, &network, &routes, EXACT_LIMIT)?
            } else {
                allocate(&circuit, &network, &routes)?
            };
            let inst = Instance::new(circuit, network, alloc)?;
            let file =
                AllocationFile { cost: inst.allocation_cost, placements: inst.allocation.placements(&inst.network) };
            write_json(common.out.as_deref(), &file)
        }
        Command::Schedule { common, instance, algorithm } => {
            let algorithm: Algorithm = algorithm.parse()?;
            let inst = load_instance(&instance)?;
            let p = plan(&inst, algorithm)?;
            let report = p.validate();
            if !report.is_valid() {
                bail!("schedule failed validation: {:?}", report.violations);
            }
            write_json(
                common.out.as_deref(),
                &serde_json::json!({
                    "algorithm": algorithm,
                    "analytic_total": p.analytic_total(),
                    "num_remote_gates": p.num_remote_gates,
                    "num_ces": p.num_ces,
                    "demands": p.demands,
                    "schedule": p.schedule,
                    "segments": p.segments,
                }),
            )
        }
        Command::Simulate { common, instance, algorithm, trials, overlap, trace } => {
            let algorithm: Algorithm = algorithm.parse()?;
            let inst = load_instance(&instance)?;
            let p = plan(&inst, algorithm)?;
            let config =
                SimConfig { seed: common.seed, trials, overlap_next_batch: overlap, record_trace: trace.is_some() };
            let mut result = simulate(&p, &inst.network, &config)?;
            if let (Some(path), Some(traces)) = (&trace, result.traces.take()) {
                let file = fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
                write_trace(&traces, std::io::BufWriter::new(file))?;
            }
            write_json(
                common.out.as_deref(),
                &serde_json::json!({
                    "algorithm": algorithm,
                    "analytic_total": p.analytic_total(),
                    "result": result,
                }),
            )
        }
        Command::Experiment { common, only_seed, plot } => {
            let mut config = load_config(&common)?;
            if only_seed {
                config.seeds = vec![common.seed];
            }
            let rows = run_experiment(&config)?;
            let out = common.out.as_deref().or(config.output.as_deref());
            let mut body = Vec::new();
            write_csv(&rows, &mut body)?;
            write_out(out, &body)?;
            if let Some(path) = plot {
                let variable = config.sweep.as_ref().map_or("", |s| s.variable.name());
                let mut body = Vec::new();
                write_plot_data(&emit_plot_data(&rows, variable)?, &mut body)?;
                write_out(Some(&path), &body)?;
            }
            let failed = rows.iter().filter(|r| !r.is_ok()).count();
            if failed > 0 {
                eprintln!("{failed} of {} cells failed; see the status and diagnostic columns", rows.len());
            }
            Ok(())
        }
    }
}

fn main() {
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
