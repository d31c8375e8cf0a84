//! Plans and simulates one default-size random instance with every algorithm.
//!
//! Usage: `cargo run --release --example compare -- [seed] [cnot|cz]`

use std::time::Instant;

use qdist_core::circuit::{generate_random_circuit, BinaryKind, RandomCircuitParams};
use qdist_core::network::{generate_waxman, NetworkParams, WaxmanParams};
use qdist_core::pipeline::{plan, Algorithm, Instance};
use qdist_core::sim::{simulate, SimConfig};

fn main() -> qdist_core::Result<()> {
    let mut args = std::env::args().skip(1);
    let seed = args.next().map_or(1, |s| s.parse().expect("seed must be an integer"));
    let binary_kind = match args.next().as_deref() {
        Some("cnot") => BinaryKind::Cnot,
        _ => BinaryKind::Cz,
    };
    let circuit = generate_random_circuit(&RandomCircuitParams { binary_kind, ..Default::default() }, seed)?;
    let network = generate_waxman(&WaxmanParams::default(), NetworkParams::default(), seed)?;
    let instance = Instance::allocate(circuit, network)?;
    println!("allocation cost {:.3}", instance.allocation_cost);
    for algorithm in Algorithm::ALL {
        let start = Instant::now();
        let p = plan(&instance, algorithm)?;
        let planned = start.elapsed();
        let r = simulate(&p, &instance.network, &SimConfig { seed, ..Default::default() })?;
        println!(
            "{algorithm:15} analytic {:8.3}  simulated {:7.3} ± {:.3}  eps {:4}  batches {:3}  plan {planned:.2?}",
            p.analytic_total(),
            r.mean,
            r.stddev,
            p.eps.len(),
            p.schedule.batches.len(),
        );
    }
    Ok(())
}
