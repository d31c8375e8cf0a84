use fixedbitset::FixedBitSet;
use rayon::prelude::*;

use super::{ConsumptionOrder, LatencyOracle, Schedule};
use crate::error::{Error, Result};
use crate::EpId;

/// Default size limit of the exhaustive scheduler.
pub const BRUTE_FORCE_LIMIT: usize = 10;

/// Candidate sets below this size are evaluated sequentially.
const PAR_MIN_LEN: usize = 64;

fn check_inputs(order: &ConsumptionOrder, tau: f64, oracle: &dyn LatencyOracle) -> Result<Vec<f64>> {
    if order.len() != oracle.num_eps() {
        return Err(Error::Contract(format!("order covers {} EPs, oracle {}", order.len(), oracle.num_eps())));
    }
    if tau.is_nan() || tau <= 0.0 {
        return Err(Error::Param(format!("deadline must be positive, got {tau}")));
    }
    (0..oracle.num_eps())
        .map(|e| {
            let l = oracle.singleton(e);
            if l > tau {
                Err(Error::Infeasible { ep: e, latency: l, tau })
            } else {
                Ok(l)
            }
        })
        .collect()
}

/// Optimal contiguous partition of the lowest-id topological order.
pub fn dp_schedule(order: &ConsumptionOrder, tau: f64, oracle: &dyn LatencyOracle) -> Result<Schedule> {
    check_inputs(order, tau, oracle)?;
    let topo = order.topological_order();
    let m = topo.len();
    let mut best = vec![f64::INFINITY; m + 1];
    let mut cut = vec![0usize; m + 1];
    best[0] = 0.0;
    let mut counts = vec![0u32; oracle.num_classes()];
    for j in 1..=m {
        counts.iter_mut().for_each(|c| *c = 0);
        for i in (0..j).rev() {
            counts[oracle.class_of(topo[i])] += 1;
            let l = oracle.latency(&counts);
            if l > tau {
                break;
            }
            if best[i] + l < best[j] {
                best[j] = best[i] + l;
                cut[j] = i;
            }
        }
    }
    let mut sets = Vec::new();
    let mut j = m;
    while j > 0 {
        sets.push(topo[cut[j]..j].to_vec());
        j = cut[j];
    }
    sets.reverse();
    Ok(Schedule::from_sets(sets, oracle))
}

/// Working state for building one batch by peeling a candidate set.
struct Peel<'a> {
    order: &'a ConsumptionOrder,
    class: &'a [usize],
    nc: usize,
    set: FixedBitSet,
    size: usize,
    counts: Vec<u32>,
    /// Row `e`: per-class count of `e`'s descendants inside `set`.
    desc_counts: Vec<u32>,
    desc_size: Vec<usize>,
}

impl<'a> Peel<'a> {
    fn new(order: &'a ConsumptionOrder, class: &'a [usize], nc: usize, set: FixedBitSet) -> Self {
        let m = class.len();
        let mut p = Peel {
            order,
            class,
            nc,
            size: set.count_ones(..),
            counts: vec![0; nc],
            desc_counts: vec![0; m * nc],
            desc_size: vec![0; m],
            set,
        };
        for e in p.set.ones() {
            p.counts[class[e]] += 1;
            for d in order.descendants(e).intersection(&p.set) {
                p.desc_counts[e * nc + class[d]] += 1;
                p.desc_size[e] += 1;
            }
        }
        p
    }

    /// Average latency of the set left after removing `e` and its descendants.
    fn score(&self, e: EpId, oracle: &dyn LatencyOracle, buf: &mut [u32]) -> f64 {
        let rest = self.size - self.desc_size[e] - 1;
        if rest == 0 {
            return f64::INFINITY;
        }
        let row = &self.desc_counts[e * self.nc..(e + 1) * self.nc];
        for ((b, &c), &r) in buf.iter_mut().zip(&self.counts).zip(row) {
            *b = c - r;
        }
        buf[self.class[e]] -= 1;
        oracle.latency(buf) / rest as f64
    }

    fn remove_with_descendants(&mut self, e: EpId) {
        let mut removed = self.order.descendants(e).clone();
        removed.intersect_with(&self.set);
        removed.insert(e);
        self.set.difference_with(&removed);
        for r in removed.ones() {
            let c = self.class[r];
            self.counts[c] -= 1;
            self.size -= 1;
            for a in self.order.ancestors(r).intersection(&self.set) {
                self.desc_counts[a * self.nc + c] -= 1;
                self.desc_size[a] -= 1;
            }
        }
    }
}

/// Greedy batch construction: each batch is the lowest-average-latency
/// feasible set met while repeatedly peeling the EP (with its descendants)
/// whose removal leaves the lowest average latency. Peeling starts from the
/// remaining EPs that can join some feasible batch.
pub fn greedy_schedule(order: &ConsumptionOrder, tau: f64, oracle: &dyn LatencyOracle) -> Result<Schedule> {
    let single = check_inputs(order, tau, oracle)?;
    let m = oracle.num_eps();
    let nc = oracle.num_classes();
    let class: Vec<usize> = (0..m).map(|e| oracle.class_of(e)).collect();
    let mut remaining = FixedBitSet::with_capacity(m);
    remaining.insert_range(..);
    let mut sets = Vec::new();
    while !remaining.is_clear() {
        let seed = remaining
            .ones()
            .filter(|&e| order.ancestors(e).is_disjoint(&remaining))
            .min_by(|&a, &b| single[a].total_cmp(&single[b]).then(a.cmp(&b)))
            .expect("a finite partial order has a minimal element");
        let mut best = (single[seed], vec![seed]);
        let mut peel = Peel::new(order, &class, nc, batchable(order, &remaining, tau, oracle));
        loop {
            let l = oracle.latency(&peel.counts);
            let avg = l / peel.size as f64;
            if l <= tau && avg < best.0 {
                best = (avg, peel.set.ones().collect());
            }
            if peel.size == 1 {
                break;
            }
            let members: Vec<EpId> = peel.set.ones().collect();
            let peel_ref = &peel;
            let (_, pick) = members
                .par_iter()
                .with_min_len(PAR_MIN_LEN)
                .map_init(|| vec![0u32; nc], |buf, &e| (peel_ref.score(e, oracle, buf), e))
                .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
                .expect("nonempty candidate set");
            peel.remove_with_descendants(pick);
            if peel.size == 0 {
                break;
            }
        }
        for &e in &best.1 {
            remaining.set(e, false);
        }
        sets.push(best.1);
    }
    Ok(Schedule::from_sets(sets, oracle))
}

/// Members of `remaining` that fit in some feasible batch, i.e. whose
/// ancestor closure within `remaining` meets the deadline. Down-closed
/// because the oracle is monotone.
fn batchable(order: &ConsumptionOrder, remaining: &FixedBitSet, tau: f64, oracle: &dyn LatencyOracle) -> FixedBitSet {
    let mut out = FixedBitSet::with_capacity(remaining.len());
    let mut blocked = FixedBitSet::with_capacity(remaining.len());
    let mut counts = vec![0u32; oracle.num_classes()];
    for e in remaining.ones() {
        let anc = order.ancestors(e);
        if !anc.is_disjoint(&blocked) {
            blocked.insert(e);
            continue;
        }
        counts.iter_mut().for_each(|c| *c = 0);
        counts[oracle.class_of(e)] += 1;
        for a in anc.intersection(remaining) {
            counts[oracle.class_of(a)] += 1;
        }
        if oracle.latency(&counts) <= tau {
            out.insert(e);
        } else {
            blocked.insert(e);
        }
    }
    out
}

/// Minimum-total schedule over all deadline-feasible no-wait ordered
/// partitions, by memoization over the set of already generated EPs.
/// Totals accumulate batch by batch from the front, the same summation order
/// as `Schedule::total_latency`, so ties are not broken by rounding.
pub fn brute_force_schedule(
    order: &ConsumptionOrder,
    tau: f64,
    oracle: &dyn LatencyOracle,
    limit: usize,
) -> Result<Schedule> {
    check_inputs(order, tau, oracle)?;
    let m = oracle.num_eps();
    if m > limit || m >= usize::BITS as usize {
        return Err(Error::TooLarge { size: m, limit });
    }
    let full = (1usize << m) - 1;
    let lat: Vec<f64> = (0..=full).map(|mask| oracle.latency_of(&bits(mask))).collect();
    let anc: Vec<usize> = (0..m).map(|e| order.ancestors(e).ones().fold(0, |acc, a| acc | 1 << a)).collect();
    let mut best = vec![f64::INFINITY; full + 1];
    let mut choice = vec![0usize; full + 1];
    best[0] = 0.0;
    // `done | sub > done`, so every state is final before it is extended.
    for done in 0..full {
        if best[done] == f64::INFINITY {
            continue;
        }
        let rem = full & !done;
        let mut sub = rem;
        while sub > 0 {
            let next = done | sub;
            if lat[sub] <= tau && best[done] + lat[sub] < best[next] && down_closed(sub, rem & !sub, &anc) {
                best[next] = best[done] + lat[sub];
                choice[next] = sub;
            }
            sub = (sub - 1) & rem;
        }
    }
    let mut sets = Vec::new();
    let mut done = full;
    while done > 0 {
        sets.push(bits(choice[done]));
        done ^= choice[done];
    }
    sets.reverse();
    Ok(Schedule::from_sets(sets, oracle))
}

fn bits(mut mask: usize) -> Vec<EpId> {
    let mut out = Vec::with_capacity(mask.count_ones() as usize);
    while mask > 0 {
        out.push(mask.trailing_zeros() as usize);
        mask &= mask - 1;
    }
    out
}

/// No member of `sub` has an ancestor in `outside`.
fn down_closed(mut sub: usize, outside: usize, anc: &[usize]) -> bool {
    while sub > 0 {
        if anc[sub.trailing_zeros() as usize] & outside != 0 {
            return false;
        }
        sub &= sub - 1;
    }
    true
}
