//! Circuit representation, generators and the circuit graph.
//!
//! A circuit is an ordered list of unary, CNOT and CZ gates over logical
//! qubits. Every gate carries a time instant; instants strictly increase
//! along the gate list.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::QubitId;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum GateKind {
    Unary(String),
    Cnot,
    Cz,
}

impl GateKind {
    pub fn is_binary(&self) -> bool {
        !matches!(self, GateKind::Unary(_))
    }
}

impl fmt::Display for GateKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GateKind::Unary(label) => write!(f, "u:{label}"),
            GateKind::Cnot => f.write_str("cnot"),
            GateKind::Cz => f.write_str("cz"),
        }
    }
}

impl FromStr for GateKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cnot" => Ok(GateKind::Cnot),
            "cz" => Ok(GateKind::Cz),
            _ => match s.strip_prefix("u:") {
                Some(label) => Ok(GateKind::Unary(label.to_string())),
                None => Err(Error::Parse(format!("unknown gate kind {s:?}"))),
            },
        }
    }
}

impl TryFrom<String> for GateKind {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<GateKind> for String {
    fn from(kind: GateKind) -> String {
        kind.to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Gate {
    pub kind: GateKind,
    pub operands: Vec<QubitId>,
    pub time: u64,
}

impl Gate {
    pub fn unary(label: &str, q: QubitId, time: u64) -> Self {
        Gate { kind: GateKind::Unary(label.to_string()), operands: vec![q], time }
    }

    pub fn cnot(control: QubitId, target: QubitId, time: u64) -> Self {
        Gate { kind: GateKind::Cnot, operands: vec![control, target], time }
    }

    pub fn cz(a: QubitId, b: QubitId, time: u64) -> Self {
        Gate { kind: GateKind::Cz, operands: vec![a, b], time }
    }

    pub fn is_binary(&self) -> bool {
        self.kind.is_binary()
    }

    /// Operand pair of a binary gate, in gate order.
    pub fn pair(&self) -> Option<(QubitId, QubitId)> {
        match (self.is_binary(), self.operands.as_slice()) {
            (true, [a, b]) => Some((*a, *b)),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Circuit {
    pub num_qubits: usize,
    pub gates: Vec<Gate>,
}

impl Circuit {
    pub fn new(num_qubits: usize) -> Self {
        Circuit { num_qubits, gates: Vec::new() }
    }

    /// Appends a gate at the next free time instant.
    pub fn push(&mut self, kind: GateKind, operands: Vec<QubitId>) {
        let time = self.gates.last().map_or(0, |g| g.time + 1);
        self.gates.push(Gate { kind, operands, time });
    }

    pub fn binary_count(&self) -> usize {
        self.gates.iter().filter(|g| g.is_binary()).count()
    }

    pub fn count_kind(&self, pred: impl Fn(&GateKind) -> bool) -> usize {
        self.gates.iter().filter(|g| pred(&g.kind)).count()
    }

    pub fn validate(&self) -> Result<()> {
        let mut last: Option<u64> = None;
        for (i, g) in self.gates.iter().enumerate() {
            let arity = if g.is_binary() { 2 } else { 1 };
            if g.operands.len() != arity {
                return Err(Error::Model(format!("gate {i} has {} operands", g.operands.len())));
            }
            if let Some(&q) = g.operands.iter().find(|&&q| q >= self.num_qubits) {
                return Err(Error::Model(format!("gate {i} uses qubit {q} out of range")));
            }
            if arity == 2 && g.operands[0] == g.operands[1] {
                return Err(Error::Model(format!("gate {i} has repeated operand")));
            }
            if last.is_some_and(|t| g.time <= t) {
                return Err(Error::Model(format!("gate {i} time instant is not increasing")));
            }
            last = Some(g.time);
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let c: Circuit = serde_json::from_str(s)?;
        c.validate()?;
        Ok(c)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BinaryKind {
    Cnot,
    Cz,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RandomCircuitParams {
    pub num_qubits: usize,
    pub gates_per_qubit: usize,
    pub binary_fraction: f64,
    pub binary_kind: BinaryKind,
}

impl Default for RandomCircuitParams {
    fn default() -> Self {
        RandomCircuitParams { num_qubits: 50, gates_per_qubit: 50, binary_fraction: 0.5, binary_kind: BinaryKind::Cz }
    }
}

const UNARY_LABELS: [&str; 5] = ["h", "x", "t", "s", "rz"];

/// Random circuit, one gate at a time, operands drawn uniformly.
pub fn generate_random_circuit(params: &RandomCircuitParams, seed: u64) -> Result<Circuit> {
    if params.num_qubits < 2 {
        return Err(Error::Param(format!("need at least 2 qubits, got {}", params.num_qubits)));
    }
    if !(0.0..=1.0).contains(&params.binary_fraction) {
        return Err(Error::Param(format!("binary fraction {} outside [0, 1]", params.binary_fraction)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = params.num_qubits;
    let total = n * params.gates_per_qubit;
    let mut circuit = Circuit::new(n);
    circuit.gates.reserve(total);
    for _ in 0..total {
        if rng.random_bool(params.binary_fraction) {
            let a = rng.random_range(0..n);
            let mut b = rng.random_range(0..n - 1);
            if b >= a {
                b += 1;
            }
            let kind = match params.binary_kind {
                BinaryKind::Cnot => GateKind::Cnot,
                BinaryKind::Cz => GateKind::Cz,
            };
            circuit.push(kind, vec![a, b]);
        } else {
            let q = rng.random_range(0..n);
            let label = UNARY_LABELS[rng.random_range(0..UNARY_LABELS.len())];
            circuit.push(GateKind::Unary(label.into()), vec![q]);
        }
    }
    Ok(circuit)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Benchmark {
    Ghz,
    Qft,
    Qpe,
}

impl FromStr for Benchmark {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ghz" => Ok(Benchmark::Ghz),
            "qft" => Ok(Benchmark::Qft),
            "qpe" => Ok(Benchmark::Qpe),
            _ => Err(Error::Param(format!("unknown benchmark {s:?}"))),
        }
    }
}

/// Controlled phase as P(l/2) on control, CNOT, P(-l/2) on target, CNOT,
/// P(l/2) on target.
fn push_controlled_phase(c: &mut Circuit, control: QubitId, target: QubitId, k: u32) {
    let angle = format!("p(pi/{})", 1u64 << k.min(62));
    c.push(GateKind::Unary(format!("{angle}/2")), vec![control]);
    c.push(GateKind::Cnot, vec![control, target]);
    c.push(GateKind::Unary(format!("-{angle}/2")), vec![target]);
    c.push(GateKind::Cnot, vec![control, target]);
    c.push(GateKind::Unary(format!("{angle}/2")), vec![target]);
}

fn push_qft(c: &mut Circuit, qubits: &[QubitId], inverse: bool) {
    let n = qubits.len();
    let mut steps: Vec<(usize, Option<usize>)> = Vec::new();
    for i in 0..n {
        steps.push((i, None));
        for j in i + 1..n {
            steps.push((i, Some(j)));
        }
    }
    if inverse {
        steps.reverse();
    }
    for (i, j) in steps {
        match j {
            None => c.push(GateKind::Unary("h".into()), vec![qubits[i]]),
            Some(j) => push_controlled_phase(c, qubits[j], qubits[i], (j - i) as u32),
        }
    }
}

/// Textbook GHZ, QFT and QPE circuits over {unary, CNOT}.
pub fn generate_benchmark(kind: Benchmark, num_qubits: usize) -> Result<Circuit> {
    let min = if kind == Benchmark::Qpe { 3 } else { 2 };
    if num_qubits < min {
        return Err(Error::Param(format!("{kind:?} needs at least {min} qubits")));
    }
    let mut c = Circuit::new(num_qubits);
    match kind {
        Benchmark::Ghz => {
            c.push(GateKind::Unary("h".into()), vec![0]);
            for q in 1..num_qubits {
                c.push(GateKind::Cnot, vec![0, q]);
            }
        }
        Benchmark::Qft => {
            let qubits: Vec<_> = (0..num_qubits).collect();
            push_qft(&mut c, &qubits, false);
        }
        Benchmark::Qpe => {
            let target = num_qubits - 1;
            let counting: Vec<_> = (0..target).collect();
            c.push(GateKind::Unary("x".into()), vec![target]);
            for &q in &counting {
                c.push(GateKind::Unary("h".into()), vec![q]);
            }
            // controlled-U^(2^k) with U a phase gate
            for (k, &q) in counting.iter().enumerate() {
                push_controlled_phase(&mut c, q, target, (counting.len() - k) as u32);
            }
            push_qft(&mut c, &counting, true);
        }
    }
    Ok(c)
}

/// Rewrites every CNOT as H(target), CZ, H(target). Time instants are
/// renumbered one gate per instant when anything changes.
pub fn cnot_to_cz(circuit: &Circuit) -> Circuit {
    if !circuit.gates.iter().any(|g| g.kind == GateKind::Cnot) {
        return circuit.clone();
    }
    let mut out = Circuit::new(circuit.num_qubits);
    for g in &circuit.gates {
        match (&g.kind, g.operands.as_slice()) {
            (GateKind::Cnot, &[control, target]) => {
                out.push(GateKind::Unary("h".into()), vec![target]);
                out.push(GateKind::Cz, vec![control, target]);
                out.push(GateKind::Unary("h".into()), vec![target]);
            }
            _ => out.push(g.kind.clone(), g.operands.clone()),
        }
    }
    out
}

/// Symmetric count of binary gates per qubit pair.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CircuitGraph {
    n: usize,
    weights: Vec<u64>,
}

impl CircuitGraph {
    pub fn zeros(n: usize) -> Self {
        CircuitGraph { n, weights: vec![0; n * n] }
    }

    pub fn num_nodes(&self) -> usize {
        self.n
    }

    pub fn weight(&self, a: QubitId, b: QubitId) -> u64 {
        self.weights[a * self.n + b]
    }

    pub fn add(&mut self, a: QubitId, b: QubitId, w: u64) {
        self.weights[a * self.n + b] += w;
        self.weights[b * self.n + a] += w;
    }

    /// Nonzero edges `(a, b, w)` with `a < b`.
    pub fn edges(&self) -> impl Iterator<Item = (QubitId, QubitId, u64)> + '_ {
        (0..self.n).flat_map(move |a| {
            (a + 1..self.n).filter_map(move |b| {
                let w = self.weight(a, b);
                (w > 0).then_some((a, b, w))
            })
        })
    }

    pub fn total_weight(&self) -> u64 {
        self.edges().map(|(_, _, w)| w).sum()
    }
}

pub fn build_circuit_graph(circuit: &Circuit) -> CircuitGraph {
    let mut g = CircuitGraph::zeros(circuit.num_qubits);
    for (a, b) in circuit.gates.iter().filter_map(Gate::pair) {
        g.add(a, b, 1);
    }
    g
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_random_circuit_size() {
        let c = generate_random_circuit(&RandomCircuitParams::default(), 3).unwrap();
        assert_eq!(c.gates.len(), 2500);
        let binary = c.binary_count();
        assert!((1100..=1400).contains(&binary), "{binary}");
        c.validate().unwrap();
    }

    #[test]
    fn zero_fraction_has_no_binary_gates() {
        let p = RandomCircuitParams {
            num_qubits: 2,
            gates_per_qubit: 1,
            binary_fraction: 0.0,
            binary_kind: BinaryKind::Cnot,
        };
        let c = generate_random_circuit(&p, 1).unwrap();
        assert_eq!(c.gates.len(), 2);
        assert_eq!(c.binary_count(), 0);
    }

    #[test]
    fn random_circuit_is_seeded() {
        let p = RandomCircuitParams {
            num_qubits: 5,
            gates_per_qubit: 10,
            binary_fraction: 1.0,
            binary_kind: BinaryKind::Cz,
        };
        assert_eq!(generate_random_circuit(&p, 7).unwrap(), generate_random_circuit(&p, 7).unwrap());
    }

    #[test]
    fn random_circuit_rejects_bad_params() {
        let mut p = RandomCircuitParams { num_qubits: 1, ..Default::default() };
        assert!(matches!(generate_random_circuit(&p, 0), Err(Error::Param(_))));
        p.num_qubits = 4;
        p.binary_fraction = 1.5;
        assert!(matches!(generate_random_circuit(&p, 0), Err(Error::Param(_))));
    }

    #[test]
    fn ghz_ladder() {
        let c = generate_benchmark(Benchmark::Ghz, 6).unwrap();
        assert_eq!(c.gates.len(), 6);
        assert_eq!(c.gates[0], Gate::unary("h", 0, 0));
        for (i, g) in c.gates[1..].iter().enumerate() {
            assert_eq!(g.kind, GateKind::Cnot);
            assert_eq!(g.operands, vec![0, i + 1]);
        }
    }

    #[test]
    fn qft_cnot_count_is_twice_the_pair_count() {
        for n in 2..8 {
            let c = generate_benchmark(Benchmark::Qft, n).unwrap();
            c.validate().unwrap();
            assert_eq!(c.count_kind(|k| *k == GateKind::Cnot), n * (n - 1));
        }
        assert_eq!(generate_benchmark(Benchmark::Qft, 3).unwrap().binary_count(), 6);
    }

    #[test]
    fn qpe_has_a_cnot_per_controlled_power() {
        let c = generate_benchmark(Benchmark::Qpe, 4).unwrap();
        c.validate().unwrap();
        let target = 3;
        for q in 0..3 {
            assert!(c.gates.iter().any(|g| g.kind == GateKind::Cnot && g.operands == vec![q, target]));
        }
        // 3 controlled powers plus an inverse QFT over 3 counting qubits
        assert_eq!(c.binary_count(), 2 * 3 + 2 * 3);
        assert!(generate_benchmark(Benchmark::Qpe, 2).is_err());
    }

    #[test]
    fn cnot_to_cz_rewrite() {
        let mut c = Circuit::new(2);
        c.push(GateKind::Cnot, vec![0, 1]);
        let out = cnot_to_cz(&c);
        assert_eq!(out.gates, vec![Gate::unary("h", 1, 0), Gate::cz(0, 1, 1), Gate::unary("h", 1, 2)]);
    }

    #[test]
    fn cnot_to_cz_fixpoint_and_counts() {
        let mut c = Circuit::new(3);
        c.push(GateKind::Cz, vec![0, 2]);
        c.push(GateKind::Unary("x".into()), vec![1]);
        assert_eq!(cnot_to_cz(&c), c);

        let mut c = Circuit::new(4);
        for i in 0..10 {
            c.push(GateKind::Cnot, vec![i % 4, (i + 1) % 4]);
            if i % 2 == 0 {
                c.push(GateKind::Unary("t".into()), vec![i % 4]);
            }
        }
        let out = cnot_to_cz(&c);
        out.validate().unwrap();
        assert_eq!(out.count_kind(|k| *k == GateKind::Cz), 10);
        assert_eq!(out.count_kind(|k| !k.is_binary()), 25);
        assert_eq!(out.gates.len(), c.gates.len() + 20);
        assert_eq!(build_circuit_graph(&out), build_circuit_graph(&c));
    }

    #[test]
    fn circuit_graph_counts_pairs() {
        let mut c = Circuit::new(3);
        for _ in 0..3 {
            c.push(GateKind::Cz, vec![0, 1]);
        }
        c.push(GateKind::Cz, vec![2, 1]);
        c.push(GateKind::Unary("h".into()), vec![2]);
        let g = build_circuit_graph(&c);
        assert_eq!(g.weight(0, 1), 3);
        assert_eq!(g.weight(1, 0), 3);
        assert_eq!(g.weight(1, 2), 1);
        assert_eq!(g.weight(0, 2), 0);

        let unary_only = generate_random_circuit(
            &RandomCircuitParams { num_qubits: 4, gates_per_qubit: 5, binary_fraction: 0.0, ..Default::default() },
            2,
        )
        .unwrap();
        assert_eq!(build_circuit_graph(&unary_only).total_weight(), 0);
    }

    #[test]
    fn gate_kind_strings() {
        for (s, k) in [("cnot", GateKind::Cnot), ("cz", GateKind::Cz), ("u:rz", GateKind::Unary("rz".into()))] {
            assert_eq!(s.parse::<GateKind>().unwrap(), k);
            assert_eq!(k.to_string(), s);
        }
        assert!("swap".parse::<GateKind>().is_err());
    }

    #[test]
    fn validate_rejects_bad_circuits() {
        let mut c = Circuit::new(2);
        c.gates.push(Gate::cz(0, 0, 0));
        assert!(c.validate().is_err());
        let mut c = Circuit::new(2);
        c.gates.push(Gate::unary("h", 0, 3));
        c.gates.push(Gate::unary("h", 1, 3));
        assert!(c.validate().is_err());
        let mut c = Circuit::new(2);
        c.gates.push(Gate::unary("h", 2, 0));
        assert!(c.validate().is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn json_round_trip(seed in any::<u64>(), frac in 0.0f64..=1.0, cnot in any::<bool>()) {
                let p = RandomCircuitParams {
                    num_qubits: 6,
                    gates_per_qubit: 4,
                    binary_fraction: frac,
                    binary_kind: if cnot { BinaryKind::Cnot } else { BinaryKind::Cz },
                };
                let c = generate_random_circuit(&p, seed).unwrap();
                prop_assert_eq!(Circuit::from_json(&c.to_json().unwrap()).unwrap(), c);
            }

            #[test]
            fn graph_ignores_gate_order(seed in any::<u64>(), rot in 0usize..40) {
                let p = RandomCircuitParams { num_qubits: 5, gates_per_qubit: 8, ..Default::default() };
                let c = generate_random_circuit(&p, seed).unwrap();
                let mut shuffled = c.clone();
                shuffled.gates.rotate_left(rot % c.gates.len());
                shuffled.gates.reverse();
                let g = build_circuit_graph(&c);
                prop_assert_eq!(&g, &build_circuit_graph(&shuffled));
                prop_assert_eq!(g.total_weight() as usize, c.binary_count());
            }
        }
    }
}
