//! Transfer identification solvers.
//!
//! * [`solve_ip`]: exact L1 integer program.
//! * [`solve_qcp`] + [`round_relaxation`]: convex relaxation of the quadratic
//!   model followed by threshold rounding.
//! * [`solve_brute`]: exhaustive enumeration for tiny instances, under either
//!   objective. This is the reference the other two are checked against.

mod brute;
mod flow;
mod ip;
mod qcp;
mod rounding;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::model::{RateGroups, StopRegistry, TransferAssignment, TransferRates, TransferTargets, TripSegment};

pub use brute::{solve_brute, BRUTE_FORCE_LIMIT};
pub use ip::solve_ip;
pub use qcp::{solve_qcp, solve_qcp_with, QcpOptions};
pub use rounding::round_relaxation;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Ip,
    QcpRounded,
    BruteL1,
    BruteL2,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Ip => "ip",
            Method::QcpRounded => "qcp_rounded",
            Method::BruteL1 => "brute_l1",
            Method::BruteL2 => "brute_l2",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    L1,
    L2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverReport {
    pub method: Method,
    pub objective: f64,
    pub wall_time: f64,
    /// Branch-and-bound nodes, ADMM iterations or enumerated leaves.
    pub iterations: u64,
}

impl SolverReport {
    /// `key = value` lines for the run log.
    pub fn to_kv(&self) -> String {
        format!(
            "method = {}\nobjective = {}\nwall_time_s = {:.6}\niterations = {}\n",
            self.method, self.objective, self.wall_time, self.iterations
        )
    }
}

/// Number of first legs per rate group.
pub(crate) fn first_legs_per_group(
    assignment: &TransferAssignment,
    group_of: &[usize],
    groups: usize,
) -> Vec<u64> {
    let mut counts = vec![0u64; groups];
    for (j, k) in assignment.transfer_to.iter().enumerate() {
        if k.is_some() {
            counts[group_of[j]] += 1;
        }
    }
    counts
}

pub(crate) fn l1_from_counts(counts: &[u64], deltas: &[u64]) -> f64 {
    counts
        .iter()
        .zip(deltas)
        .map(|(&m, &d)| m.abs_diff(d))
        .sum::<u64>() as f64
}

/// Squared deviation of group proportions from the observed rates. A group
/// nothing alights in has an unconstrained rate and contributes nothing.
pub(crate) fn l2_from_counts(counts: &[f64], sizes: &[u64], probs: &[f64]) -> f64 {
    counts
        .iter()
        .zip(sizes)
        .zip(probs)
        .filter(|((_, &n), _)| n > 0)
        .map(|((&m, &n), &p)| (m / n as f64 - p).powi(2))
        .sum()
}

/// `sum_i |delta_1i - first legs at i| + |delta_2 - first legs elsewhere|`.
pub fn objective_l1(
    assignment: &TransferAssignment,
    segments: &[TripSegment],
    registry: &StopRegistry,
    targets: &TransferTargets,
) -> f64 {
    let groups = RateGroups::new(registry);
    let group_of = groups.of_segments(segments);
    let counts = first_legs_per_group(assignment, &group_of, groups.count());
    l1_from_counts(&counts, &groups.targets(targets))
}

/// `sum_i (p_1i - p*_1i)^2 + (p_2 - p*_2)^2`. Centers absent from `p1` are
/// skipped.
pub fn objective_l2(p1: &BTreeMap<String, f64>, p2: f64, rates: &TransferRates) -> f64 {
    let centers: f64 = p1
        .iter()
        .map(|(id, &p)| (p - rates.centers.get(id).copied().unwrap_or(0.0)).powi(2))
        .sum();
    centers + (p2 - rates.other).powi(2)
}

/// Transfer proportions realised by an integral assignment. A group with no
/// alighting segments takes its observed rate.
pub fn assignment_rates(
    assignment: &TransferAssignment,
    segments: &[TripSegment],
    registry: &StopRegistry,
    rates: &TransferRates,
) -> (BTreeMap<String, f64>, f64) {
    let groups = RateGroups::new(registry);
    let group_of = groups.of_segments(segments);
    let counts = first_legs_per_group(assignment, &group_of, groups.count());
    let sizes = groups.sizes(segments);
    let probs = groups.rates(rates);
    let prop = |g: usize| {
        if sizes[g] == 0 {
            probs[g]
        } else {
            counts[g] as f64 / sizes[g] as f64
        }
    };
    let p1 = groups
        .centers
        .iter()
        .enumerate()
        .map(|(g, id)| (id.clone(), prop(g)))
        .collect();
    (p1, prop(groups.other()))
}
