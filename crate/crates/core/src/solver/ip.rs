//! Exact solver for the L1 transfer-identification integer program.
//!
//! A selected transfer set is a node-disjoint arc set: each segment is a first
//! leg, a second leg, or neither. Since dropping a transfer never breaks
//! feasibility, an optimum never exceeds any group's target, and the objective
//! equals `n - (number of selected transfers counted within targets)`.
//!
//! Relaxing "not both a first and a second leg" to "at most one outgoing and at
//! most one incoming transfer" turns the count maximisation into a max-flow:
//!
//! ```text
//! source -> group g (cap delta_g) -> tail j (cap 1) -> head k (cap 1) -> sink
//! ```
//!
//! The max-flow value bounds the integer optimum. Segments that end up both a
//! tail and a head in the flow are role conflicts; branch-and-bound forbids one
//! role or the other until the flow is conflict free. A greedy dive that bans
//! the head role of every conflict first usually closes the gap on its own.

use std::time::Instant;

use super::flow::{EdgeId, FlowNetwork, NetworkBuilder};
use super::{first_legs_per_group, l1_from_counts, Method, SolverReport};
use crate::model::{FeasibilityGraph, RateGroups, StopRegistry, TransferAssignment, TransferTargets};

const SOURCE: usize = 0;
const SINK: usize = 1;

struct Selection {
    /// Arc leaving each segment.
    out: Vec<Option<usize>>,
    /// Arc entering each segment.
    into: Vec<Option<usize>>,
}

impl Selection {
    /// Segments that are both a tail and a head.
    fn conflicts(&self) -> Vec<usize> {
        (0..self.out.len())
            .filter(|&v| self.out[v].is_some() && self.into[v].is_some())
            .collect()
    }
}

#[derive(Clone)]
struct Relaxation {
    net: FlowNetwork,
    /// `group -> tail` arc of each segment.
    tail_arc: Vec<Option<EdgeId>>,
    /// `head -> sink` arc of each segment.
    head_arc: Vec<Option<EdgeId>>,
    /// Network arc per graph arc id.
    transfer_arc: Vec<EdgeId>,
    /// `source -> group` arc of each group.
    group_arc: Vec<EdgeId>,
    flow: u64,
}

struct Problem<'a> {
    graph: &'a FeasibilityGraph,
    tails: Vec<usize>,
    group_of: Vec<usize>,
    deltas: Vec<u64>,
    n: u64,
}

impl Relaxation {
    fn build(p: &Problem) -> Self {
        let n_seg = p.graph.len();
        let n_groups = p.deltas.len();
        let group_node = |g: usize| 2 + g;
        let tail_node = |j: usize| 2 + n_groups + j;
        let head_node = |k: usize| 2 + n_groups + n_seg + k;
        let mut b = NetworkBuilder::new(2 + n_groups + 2 * n_seg);

        let group_arc = (0..n_groups)
            .map(|g| {
                let cap = u32::try_from(p.deltas[g]).unwrap_or(u32::MAX);
                b.add(SOURCE, group_node(g), cap)
            })
            .collect();
        let mut tail_arc = vec![None; n_seg];
        for j in 0..n_seg {
            if !p.graph.successors(j).is_empty() {
                tail_arc[j] = Some(b.add(group_node(p.group_of[j]), tail_node(j), 1));
            }
        }
        // candidates in order of waiting time, so that among equally good
        // flows the augmenting search settles on the earliest connections
        let segs = &p.graph.segments;
        let mut transfer_arc = vec![0; p.graph.arc_count()];
        let mut order = Vec::new();
        for j in 0..n_seg {
            order.clear();
            order.extend(p.graph.arc_range(j).zip(p.graph.successors(j)));
            order.sort_by_key(|&(a, &k)| (segs[k].board_time - segs[j].alight_time, a));
            for &(a, &k) in &order {
                transfer_arc[a] = b.add(tail_node(j), head_node(k), 1);
            }
        }
        let mut head_arc = vec![None; n_seg];
        for &k in p.graph.heads() {
            if head_arc[k].is_none() {
                head_arc[k] = Some(b.add(head_node(k), SINK, 1));
            }
        }
        let mut r = Relaxation {
            net: b.build(),
            tail_arc,
            head_arc,
            transfer_arc,
            group_arc,
            flow: 0,
        };
        r.flow = r.net.max_flow(SOURCE, SINK);
        r
    }

    /// Current selection as tail and head indexes over graph arc ids.
    fn selection(&self, p: &Problem) -> Selection {
        let mut sel = Selection {
            out: vec![None; p.graph.len()],
            into: vec![None; p.graph.len()],
        };
        for (a, &e) in self.transfer_arc.iter().enumerate() {
            if self.net.flow(e) > 0 {
                sel.out[p.tails[a]] = Some(a);
                sel.into[p.graph.heads()[a]] = Some(a);
            }
        }
        sel
    }

    /// Removes the unit of flow on arc `a` (source through sink).
    fn cancel(&mut self, p: &Problem, a: usize, sel: &mut Selection) {
        let (j, k) = (p.tails[a], p.graph.heads()[a]);
        self.net.unpush(self.group_arc[p.group_of[j]], 1);
        self.net.unpush(self.tail_arc[j].expect("tail arc"), 1);
        self.net.unpush(self.transfer_arc[a], 1);
        self.net.unpush(self.head_arc[k].expect("head arc"), 1);
        sel.out[j] = None;
        sel.into[k] = None;
        self.flow -= 1;
    }

    /// Forbids `v` as a second leg, without re-augmenting.
    fn ban_head(&mut self, p: &Problem, v: usize, sel: &mut Selection) {
        let Some(e) = self.head_arc[v] else { return };
        if let Some(a) = sel.into[v] {
            self.cancel(p, a, sel);
        }
        self.net.set_capacity(e, 0);
    }

    /// Forbids `v` as a first leg, without re-augmenting.
    fn ban_tail(&mut self, p: &Problem, v: usize, sel: &mut Selection) {
        let Some(e) = self.tail_arc[v] else { return };
        if let Some(a) = sel.out[v] {
            self.cancel(p, a, sel);
        }
        self.net.set_capacity(e, 0);
    }

    fn reaugment(&mut self) {
        self.flow += self.net.max_flow(SOURCE, SINK);
    }
}

/// Greedy conflict repair: keep arcs in tail order while both ends are free.
fn repair(p: &Problem, sel: &Selection) -> TransferAssignment {
    let mut used = vec![false; p.graph.len()];
    let mut out = TransferAssignment::empty(p.graph.len());
    for (j, a) in sel.out.iter().enumerate() {
        if let Some(a) = *a {
            let k = p.graph.heads()[a];
            if !used[j] && !used[k] {
                used[j] = true;
                used[k] = true;
                out.transfer_to[j] = Some(k);
            }
        }
    }
    out
}

fn objective(p: &Problem, a: &TransferAssignment) -> u64 {
    let counts = first_legs_per_group(a, &p.group_of, p.deltas.len());
    l1_from_counts(&counts, &p.deltas) as u64
}

struct Search<'a> {
    p: &'a Problem<'a>,
    lower_bound: u64,
    best: TransferAssignment,
    best_obj: u64,
    nodes: u64,
}

impl Search<'_> {
    fn offer(&mut self, candidate: TransferAssignment) {
        let obj = objective(self.p, &candidate);
        if obj < self.best_obj {
            self.best_obj = obj;
            self.best = candidate;
        }
    }

    fn done(&self) -> bool {
        self.best_obj <= self.lower_bound
    }

    fn explore(&mut self, relax: Relaxation) {
        self.nodes += 1;
        let bound = self.p.n - relax.flow;
        if bound >= self.best_obj {
            return;
        }
        let sel = relax.selection(self.p);
        self.offer(repair(self.p, &sel));
        let Some(&v) = sel.conflicts().first() else { return };
        if self.done() {
            return;
        }
        let mut no_head = relax.clone();
        no_head.ban_head(self.p, v, &mut relax.selection(self.p));
        no_head.reaugment();
        self.explore(no_head);
        if self.done() {
            return;
        }
        let mut no_tail = relax;
        let mut sel = sel;
        no_tail.ban_tail(self.p, v, &mut sel);
        no_tail.reaugment();
        self.explore(no_tail);
    }
}

/// Solves the L1 integer program to optimality.
///
/// The returned assignment is node-disjoint over candidate transfers and
/// minimises `sum_g |delta_g - first legs in g|`. Output is deterministic for a
/// fixed input order.
pub fn solve_ip(
    graph: &FeasibilityGraph,
    registry: &StopRegistry,
    targets: &TransferTargets,
) -> (TransferAssignment, SolverReport) {
    let started = Instant::now();
    let groups = RateGroups::new(registry);
    let problem = Problem {
        graph,
        tails: graph.tail_of(),
        group_of: groups.of_segments(&graph.segments),
        deltas: groups.targets(targets),
        n: 0,
    };
    let problem = Problem {
        n: problem.deltas.iter().sum(),
        ..problem
    };

    let root = Relaxation::build(&problem);
    let lower_bound = problem.n - root.flow;

    // dive: ban the head role of every conflict until none remain
    let mut dive = root.clone();
    let mut rounds = 0u64;
    let dive_result = loop {
        rounds += 1;
        let mut sel = dive.selection(&problem);
        let conflicts = sel.conflicts();
        if conflicts.is_empty() {
            break repair(&problem, &sel);
        }
        for v in conflicts {
            // an earlier cancellation may already have resolved v
            if sel.out[v].is_some() && sel.into[v].is_some() {
                dive.ban_head(&problem, v, &mut sel);
            }
        }
        dive.reaugment();
    };

    let mut search = Search {
        p: &problem,
        lower_bound,
        best_obj: objective(&problem, &dive_result),
        best: dive_result,
        nodes: 0,
    };
    if !search.done() {
        search.explore(root);
    }

    let report = SolverReport {
        method: Method::Ip,
        objective: search.best_obj as f64,
        wall_time: started.elapsed().as_secs_f64(),
        iterations: rounds + search.nodes,
    };
    (search.best, report)
}
