//! Consumption order over EPs: a strict partial order stored as transitively
//! closed ancestor and descendant bitsets.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap};

use fixedbitset::FixedBitSet;

use crate::circuit::Circuit;
use crate::error::{Error, Result};
use crate::EpId;

/// Closed precedence among a subset of circuit gates: `g ≺ h` when the two
/// share an operand and `g` comes first, closed transitively.
#[derive(Debug, Clone)]
pub struct GateOrder {
    gates: Vec<usize>,
    position: HashMap<usize, usize>,
    anc: Vec<FixedBitSet>,
}

impl GateOrder {
    /// Order over the gates at `gate_indices` of `circuit`.
    pub fn new(circuit: &Circuit, gate_indices: &[usize]) -> Self {
        let mut gates = gate_indices.to_vec();
        gates.sort_unstable();
        gates.dedup();
        let n = gates.len();
        let mut last_on_qubit: Vec<Option<usize>> = vec![None; circuit.num_qubits];
        let mut anc: Vec<FixedBitSet> = Vec::with_capacity(n);
        for (pos, &g) in gates.iter().enumerate() {
            let mut set = FixedBitSet::with_capacity(n);
            for &q in &circuit.gates[g].operands {
                if let Some(p) = last_on_qubit[q] {
                    set.insert(p);
                    set.union_with(&anc[p]);
                }
            }
            anc.push(set);
            for &q in &circuit.gates[g].operands {
                last_on_qubit[q] = Some(pos);
            }
        }
        let position = gates.iter().enumerate().map(|(i, &g)| (g, i)).collect();
        GateOrder { gates, position, anc }
    }

    /// Whether gate `g` precedes gate `h` (both by circuit index).
    pub fn precedes(&self, g: usize, h: usize) -> bool {
        match (self.position.get(&g), self.position.get(&h)) {
            (Some(&a), Some(&b)) => self.anc[b].contains(a),
            _ => false,
        }
    }

    /// Circuit indices of the gates preceding gate `h`.
    pub fn predecessors(&self, h: usize) -> impl Iterator<Item = usize> + '_ {
        let pos = self.position.get(&h).copied();
        pos.into_iter().flat_map(move |p| self.anc[p].ones().map(|a| self.gates[a]))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConsumptionOrder {
    anc: Vec<FixedBitSet>,
    desc: Vec<FixedBitSet>,
}

impl ConsumptionOrder {
    /// No precedence at all.
    pub fn null(n: usize) -> Self {
        ConsumptionOrder { anc: vec![FixedBitSet::with_capacity(n); n], desc: vec![FixedBitSet::with_capacity(n); n] }
    }

    /// `0 ≺ 1 ≺ … ≺ n-1`.
    pub fn total(n: usize) -> Self {
        Self::from_pairs(n, (1..n).map(|i| (i - 1, i))).expect("chain is acyclic")
    }

    /// Transitive closure of the given `(before, after)` pairs.
    pub fn from_pairs(n: usize, pairs: impl IntoIterator<Item = (EpId, EpId)>) -> Result<Self> {
        let mut succ = vec![Vec::new(); n];
        let mut indeg = vec![0usize; n];
        for (a, b) in pairs {
            if a >= n || b >= n {
                return Err(Error::Contract(format!("order pair ({a}, {b}) out of range")));
            }
            succ[a].push(b);
            indeg[b] += 1;
        }
        let mut topo = Vec::with_capacity(n);
        let mut ready: Vec<usize> = (0..n).filter(|&i| indeg[i] == 0).collect();
        while let Some(i) = ready.pop() {
            topo.push(i);
            for &j in &succ[i] {
                indeg[j] -= 1;
                if indeg[j] == 0 {
                    ready.push(j);
                }
            }
        }
        if topo.len() != n {
            return Err(Error::Contract("consumption order has a cycle".into()));
        }
        let mut anc = vec![FixedBitSet::with_capacity(n); n];
        for &i in &topo {
            for &j in &succ[i] {
                let (src, dst) = if i < j {
                    let (l, r) = anc.split_at_mut(j);
                    (&l[i], &mut r[0])
                } else {
                    let (l, r) = anc.split_at_mut(i);
                    (&r[0], &mut l[j])
                };
                dst.union_with(src);
                dst.insert(i);
            }
        }
        Ok(Self::from_ancestors(anc))
    }

    /// EP `i` precedes EP `j` iff the gate keyed to `i` precedes the gate
    /// keyed to `j`.
    pub fn from_gate_keys(keys: &[usize], gates: &GateOrder) -> Self {
        let n = keys.len();
        let mut by_gate: HashMap<usize, Vec<EpId>> = HashMap::new();
        for (e, &g) in keys.iter().enumerate() {
            by_gate.entry(g).or_default().push(e);
        }
        let mut anc = vec![FixedBitSet::with_capacity(n); n];
        for (&h, eps) in &by_gate {
            let mut set = FixedBitSet::with_capacity(n);
            for g in gates.predecessors(h) {
                if let Some(before) = by_gate.get(&g) {
                    for &e in before {
                        set.insert(e);
                    }
                }
            }
            for &e in eps {
                anc[e] = set.clone();
            }
        }
        Self::from_ancestors(anc)
    }

    fn from_ancestors(anc: Vec<FixedBitSet>) -> Self {
        let n = anc.len();
        let mut desc = vec![FixedBitSet::with_capacity(n); n];
        for (j, a) in anc.iter().enumerate() {
            for i in a.ones() {
                desc[i].insert(j);
            }
        }
        ConsumptionOrder { anc, desc }
    }

    pub fn len(&self) -> usize {
        self.anc.len()
    }

    pub fn is_empty(&self) -> bool {
        self.anc.is_empty()
    }

    pub fn precedes(&self, i: EpId, j: EpId) -> bool {
        self.anc[j].contains(i)
    }

    pub fn ancestors(&self, i: EpId) -> &FixedBitSet {
        &self.anc[i]
    }

    pub fn descendants(&self, i: EpId) -> &FixedBitSet {
        &self.desc[i]
    }

    pub fn num_relations(&self) -> usize {
        self.anc.iter().map(|a| a.count_ones(..)).sum()
    }

    /// Kahn's order with the lowest ready id first.
    pub fn topological_order(&self) -> Vec<EpId> {
        let n = self.len();
        let mut indeg: Vec<usize> = self.anc.iter().map(|a| a.count_ones(..)).collect();
        let mut ready: BinaryHeap<Reverse<EpId>> = (0..n).filter(|&i| indeg[i] == 0).map(Reverse).collect();
        let mut out = Vec::with_capacity(n);
        while let Some(Reverse(i)) = ready.pop() {
            out.push(i);
            for j in self.desc[i].ones() {
                indeg[j] -= 1;
                if indeg[j] == 0 {
                    ready.push(Reverse(j));
                }
            }
        }
        debug_assert_eq!(out.len(), n);
        out
    }
}
