//! Exhaustive enumeration of node-disjoint transfer sets.

use std::time::Instant;

use super::{l1_from_counts, l2_from_counts, Method, Objective, SolverReport};
use crate::error::{Error, Result};
use crate::model::{
    FeasibilityGraph, RateGroups, StopRegistry, TransferAssignment, TransferRates, TransferTargets,
};

pub const BRUTE_FORCE_LIMIT: usize = 16;

struct Enumeration<'a> {
    graph: &'a FeasibilityGraph,
    group_of: Vec<usize>,
    score: Box<dyn Fn(&[u64]) -> f64 + 'a>,
    used: Vec<bool>,
    counts: Vec<u64>,
    arcs: Vec<(usize, usize)>,
    best: Option<(f64, Vec<(usize, usize)>)>,
    leaves: u64,
}

impl Enumeration<'_> {
    fn visit(&mut self, j: usize) {
        if j == self.graph.len() {
            self.leaves += 1;
            let value = (self.score)(&self.counts);
            let better = match &self.best {
                None => true,
                Some((b, arcs)) => value < *b || (value == *b && self.arcs < *arcs),
            };
            if better {
                self.best = Some((value, self.arcs.clone()));
            }
            return;
        }
        self.visit(j + 1);
        if self.used[j] {
            return;
        }
        self.used[j] = true;
        self.counts[self.group_of[j]] += 1;
        for &k in self.graph.successors(j) {
            if self.used[k] {
                continue;
            }
            self.used[k] = true;
            self.arcs.push((j, k));
            self.visit(j + 1);
            self.arcs.pop();
            self.used[k] = false;
        }
        self.counts[self.group_of[j]] -= 1;
        self.used[j] = false;
    }
}

/// Enumerates every node-disjoint subset of candidate transfers and returns a
/// minimiser of the chosen objective. Ties go to the lexicographically
/// smallest sorted arc list.
///
/// L1 scores group counts against `targets`; L2 scores group proportions
/// against `rates`.
pub fn solve_brute(
    graph: &FeasibilityGraph,
    registry: &StopRegistry,
    rates: &TransferRates,
    targets: &TransferTargets,
    objective: Objective,
) -> Result<(TransferAssignment, SolverReport)> {
    if graph.len() > BRUTE_FORCE_LIMIT {
        return Err(Error::TooLarge {
            segments: graph.len(),
            limit: BRUTE_FORCE_LIMIT,
        });
    }
    let started = Instant::now();
    let groups = RateGroups::new(registry);
    let group_of = groups.of_segments(&graph.segments);
    let score: Box<dyn Fn(&[u64]) -> f64> = match objective {
        Objective::L1 => {
            let deltas = groups.targets(targets);
            Box::new(move |c: &[u64]| l1_from_counts(c, &deltas))
        }
        Objective::L2 => {
            let sizes = groups.sizes(&graph.segments);
            let probs = groups.rates(rates);
            Box::new(move |c: &[u64]| {
                let c: Vec<f64> = c.iter().map(|&m| m as f64).collect();
                l2_from_counts(&c, &sizes, &probs)
            })
        }
    };
    let mut e = Enumeration {
        graph,
        group_of,
        score,
        used: vec![false; graph.len()],
        counts: vec![0; groups.count()],
        arcs: Vec::new(),
        best: None,
        leaves: 0,
    };
    e.visit(0);
    let (value, arcs) = e.best.expect("the empty set is always enumerated");
    let report = SolverReport {
        method: match objective {
            Objective::L1 => Method::BruteL1,
            Objective::L2 => Method::BruteL2,
        },
        objective: value,
        wall_time: started.elapsed().as_secs_f64(),
        iterations: e.leaves,
    };
    Ok((TransferAssignment::from_arcs(graph.len(), &arcs), report))
}
