//! Fixtures shared by unit tests.

use crate::circuit::{Circuit, GateKind};
use crate::network::{grid_dims_for, Link, NetworkNode, NetworkParams, QuantumNetwork};

/// Path network with one memory per node; `lengths[i]` joins nodes i, i+1.
pub fn line_network(lengths: &[f64], params: NetworkParams) -> QuantumNetwork {
    let n = lengths.len() + 1;
    let nodes = (0..n)
        .map(|id| NetworkNode {
            id,
            x: id as f64,
            y: 0.0,
            memories: vec![id],
            grid_dims: grid_dims_for(1),
            exec_memory_capacity: 8,
        })
        .collect();
    let links = lengths.iter().enumerate().map(|(i, &l)| Link { a: i, b: i + 1, length_km: l }).collect();
    QuantumNetwork { params, nodes, links }
}

/// Four computers A–B–C–D on a line; A, B, D host one memory each and C
/// hosts two. Memory i hosts qubit i under the identity allocation, with
/// qubit 4 on the second memory of C.
pub fn example_network() -> QuantumNetwork {
    let mut net = line_network(&[10.0, 10.0, 10.0], NetworkParams::default());
    let layout: [&[usize]; 4] = [&[0], &[1], &[2, 3], &[4]];
    for (node, mems) in net.nodes.iter_mut().zip(layout) {
        node.memories = mems.to_vec();
        node.grid_dims = grid_dims_for(mems.len());
    }
    net
}

/// Memory of each qubit in [`example_network`]: q0→A, q1→B, q2,q4→C, q3→D.
pub const EXAMPLE_ETA: [usize; 5] = [0, 1, 2, 4, 3];

/// Eight remote gates e1..e8 with the precedence facts e3 ≺ e5 and
/// descendants(e4) = {e6, e7, e8}, plus local and unary gates.
pub fn example_circuit() -> Circuit {
    let mut c = Circuit::new(5);
    c.push(GateKind::Unary("h".into()), vec![0]);
    c.push(GateKind::Cnot, vec![2, 4]);
    for (a, b) in [(0, 1), (2, 3), (1, 4), (0, 2), (4, 1), (0, 3), (2, 3), (3, 1)] {
        c.push(GateKind::Cnot, vec![a, b]);
    }
    c.push(GateKind::Unary("x".into()), vec![3]);
    c
}
