//! Shared fixtures for the criterion benches.

use qdist_core::circuit::{generate_random_circuit, RandomCircuitParams};
use qdist_core::network::{generate_waxman, NetworkParams, WaxmanParams};
use qdist_core::pipeline::Instance;

/// A random instance with `qubits` qubits on `nodes` Waxman nodes, allocated with the heuristic.
pub fn instance(qubits: usize, nodes: usize, seed: u64) -> Instance {
    let circuit =
        generate_random_circuit(&RandomCircuitParams { num_qubits: qubits, ..Default::default() }, seed).unwrap();
    let wp = WaxmanParams { num_nodes: nodes, total_data_memories: qubits, ..Default::default() };
    let network = generate_waxman(&wp, NetworkParams::default(), seed).unwrap();
    Instance::allocate(circuit, network).unwrap()
}
