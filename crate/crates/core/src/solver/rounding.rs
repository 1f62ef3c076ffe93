//! Threshold rounding of a relaxed solution into first legs, second legs and
//! singletons.

use std::collections::BTreeMap;

use crate::model::{FeasibilityGraph, FractionalSolution, Role, RoundedSolution, TransferTargets};

/// Smallest value `v` among `values` with at most `n` entries `>= v`.
fn threshold(values: &[f64], n: u64) -> Option<f64> {
    if n == 0 || values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_unstable_by(|a, b| b.total_cmp(a));
    let mut best = None;
    let mut i = 0;
    while i < sorted.len() {
        // count of entries >= sorted[i] is the end of its tie run
        let v = sorted[i];
        let mut end = i;
        while end < sorted.len() && sorted[end] == v {
            end += 1;
        }
        if end as u64 > n {
            break;
        }
        best = Some(v);
        i = end;
    }
    best
}

/// Rounds a relaxed solution.
///
/// First legs are the segments with `x >= x*`, where `x*` is the smallest
/// relaxed value met or exceeded by at most `n` segments. Every other segment
/// is scored by the relaxed flow it receives from those first legs, and the
/// same threshold rule picks at most `n` second legs. Each first leg then gets
/// its relaxed arcs into second legs, normalised to a distribution. A first
/// leg with no such arc carrying weight becomes a singleton.
pub fn round_relaxation(
    frac: &FractionalSolution,
    graph: &FeasibilityGraph,
    targets: &TransferTargets,
) -> RoundedSolution {
    let n = graph.len();
    let y = |a: usize| frac.y.get(a).copied().unwrap_or(0.0).max(0.0);
    let mut roles = vec![Role::Singleton; n];

    let x_star = threshold(&frac.x, targets.n);
    let Some(x_star) = x_star else {
        return RoundedSolution {
            roles,
            probs: BTreeMap::new(),
            threshold: None,
        };
    };
    let first: Vec<usize> = (0..n).filter(|&j| frac.x[j] >= x_star).collect();
    for &j in &first {
        roles[j] = Role::FirstLeg;
    }

    let mut likelihood = vec![0.0; n];
    for &j in &first {
        for (a, &k) in graph.arc_range(j).zip(graph.successors(j)) {
            likelihood[k] += y(a);
        }
    }
    let rest: Vec<usize> = (0..n).filter(|&k| roles[k] != Role::FirstLeg).collect();
    let rest_scores: Vec<f64> = rest.iter().map(|&k| likelihood[k]).collect();
    let mut is_second = vec![false; n];
    if let Some(l_star) = threshold(&rest_scores, targets.n) {
        for &k in &rest {
            if likelihood[k] >= l_star {
                is_second[k] = true;
                roles[k] = Role::SecondLeg;
            }
        }
    }

    let mut probs = BTreeMap::new();
    for &j in &first {
        let cand: Vec<(usize, f64)> = graph
            .arc_range(j)
            .zip(graph.successors(j))
            .filter(|&(_, &k)| is_second[k])
            .map(|(a, &k)| (k, y(a)))
            .collect();
        let total: f64 = cand.iter().map(|&(_, w)| w).sum();
        if cand.is_empty() || total <= 0.0 {
            roles[j] = Role::Singleton;
            continue;
        }
        probs.insert(j, cand.into_iter().map(|(k, w)| (k, w / total)).collect());
    }
    RoundedSolution {
        roles,
        probs,
        threshold: Some(x_star),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::TripSegment;

    fn graph(n: usize, arcs: Vec<Vec<usize>>) -> FeasibilityGraph {
        let segs = (0..n)
            .map(|i| TripSegment {
                segment_id: format!("s{i}"),
                route_id: format!("R{i}"),
                board_stop: "A".into(),
                alight_stop: "B".into(),
                board_time: 0,
                alight_time: 0,
            })
            .collect();
        FeasibilityGraph::from_arcs(segs, arcs)
    }

    fn frac(x: Vec<f64>, y: Vec<f64>) -> FractionalSolution {
        FractionalSolution {
            x,
            y,
            p1: BTreeMap::new(),
            p2: 0.0,
            objective: 0.0,
            residual: 0.0,
            iterations: 0,
        }
    }

    fn targets(n: u64) -> TransferTargets {
        TransferTargets {
            centers: BTreeMap::new(),
            other: n,
            n,
        }
    }

    #[test]
    fn threshold_rule() {
        assert_eq!(threshold(&[0.9, 0.7, 0.4], 2), Some(0.7));
        assert_eq!(threshold(&[0.9, 0.7, 0.4], 0), None);
        // a tie straddling n admits only the strictly larger values
        assert_eq!(threshold(&[0.9, 0.5, 0.5], 2), Some(0.9));
        assert_eq!(threshold(&[0.5, 0.5], 1), None);
        assert_eq!(threshold(&[0.5, 0.5], 5), Some(0.5));
    }

    #[test]
    fn first_legs_from_threshold() {
        let g = graph(5, vec![vec![3], vec![4], vec![], vec![], vec![]]);
        let r = round_relaxation(
            &frac(vec![0.9, 0.7, 0.4, 0.0, 0.0], vec![0.9, 0.7]),
            &g,
            &targets(2),
        );
        assert_eq!(r.threshold, Some(0.7));
        assert_eq!(r.first_legs(), vec![0, 1]);
        assert_eq!(r.second_legs(), vec![3, 4]);
        assert_eq!(r.singletons(), vec![2]);
    }

    #[test]
    fn probabilities_are_normalised() {
        let g = graph(3, vec![vec![1, 2], vec![], vec![]]);
        let r = round_relaxation(&frac(vec![0.8, 0.0, 0.0], vec![0.2, 0.6]), &g, &targets(2));
        let p = &r.probs[&0];
        assert_eq!(p.iter().map(|&(k, _)| k).collect::<Vec<_>>(), vec![1, 2]);
        assert!((p[0].1 - 0.25).abs() < 1e-12 && (p[1].1 - 0.75).abs() < 1e-12);
    }

    #[test]
    fn no_observed_transfers_means_all_singletons() {
        let g = graph(2, vec![vec![1], vec![]]);
        let r = round_relaxation(&frac(vec![1.0, 0.0], vec![1.0]), &g, &targets(0));
        assert_eq!(r.singletons(), vec![0, 1]);
        assert!(r.probs.is_empty());
        assert_eq!(r.threshold, None);
    }

    #[test]
    fn first_leg_without_weight_is_demoted() {
        // segment 1 clears the threshold but sends nothing anywhere
        let g = graph(4, vec![vec![2], vec![3], vec![], vec![]]);
        let r = round_relaxation(
            &frac(vec![0.5, 0.5, 0.0, 0.0], vec![0.5, 0.0]),
            &g,
            &targets(2),
        );
        assert_eq!(r.first_legs(), vec![0]);
        assert_eq!(r.roles[1], Role::Singleton);
        assert_eq!(r.probs[&0], vec![(2, 1.0)]);
    }
}
