use serde::{Deserialize, Serialize};

use super::{ConsumptionOrder, LatencyOracle, Schedule};
use crate::EpId;

/// Relative tolerance when comparing recorded and recomputed latencies.
const LATENCY_RTOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Violation {
    UnknownEp {
        ep: EpId,
    },
    DuplicateEp {
        ep: EpId,
    },
    MissingEp {
        ep: EpId,
    },
    EmptyBatch {
        batch: usize,
    },
    OverDeadline {
        batch: usize,
        latency: f64,
        tau: f64,
    },
    /// `before ≺ after` but `after` is generated in an earlier batch.
    NoWait {
        before: EpId,
        after: EpId,
        before_batch: usize,
        after_batch: usize,
    },
    LatencyMismatch {
        batch: usize,
        recorded: f64,
        actual: f64,
    },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

pub fn validate_schedule(
    schedule: &Schedule,
    order: &ConsumptionOrder,
    tau: f64,
    oracle: &dyn LatencyOracle,
) -> ValidationReport {
    let m = order.len();
    let mut violations = Vec::new();
    let mut batch_of: Vec<Option<usize>> = vec![None; m];
    for (b, batch) in schedule.batches.iter().enumerate() {
        if batch.eps.is_empty() {
            violations.push(Violation::EmptyBatch { batch: b });
        }
        for &e in &batch.eps {
            if e >= m {
                violations.push(Violation::UnknownEp { ep: e });
            } else if batch_of[e].replace(b).is_some() {
                violations.push(Violation::DuplicateEp { ep: e });
            }
        }
        let valid: Vec<EpId> = batch.eps.iter().copied().filter(|&e| e < m).collect();
        if valid.is_empty() {
            continue;
        }
        let actual = oracle.latency_of(&valid);
        if actual > tau {
            violations.push(Violation::OverDeadline { batch: b, latency: actual, tau });
        }
        if (actual - batch.latency).abs() > LATENCY_RTOL * actual.abs().max(batch.latency.abs()) {
            violations.push(Violation::LatencyMismatch { batch: b, recorded: batch.latency, actual });
        }
    }
    for (e, b) in batch_of.iter().enumerate() {
        let Some(after_batch) = *b else {
            violations.push(Violation::MissingEp { ep: e });
            continue;
        };
        for a in order.ancestors(e).ones() {
            if let Some(before_batch) = batch_of[a] {
                if before_batch > after_batch {
                    violations.push(Violation::NoWait { before: a, after: e, before_batch, after_batch });
                }
            }
        }
    }
    ValidationReport { violations }
}
