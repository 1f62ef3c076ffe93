//! Convex relaxation of the quadratic transfer model.
//!
//! Substituting `x_j = sum_k y_jk` leaves one family of coupling constraints,
//! `sum of y over arcs touching v <= 1` for every segment `v`, plus `y >= 0`.
//! The objective depends on `y` only through the per-group sums
//! `S_g = sum of y over arcs whose tail alights in g`:
//!
//! ```text
//! f(y) = sum_g (S_g / N_g - p*_g)^2
//! ```
//!
//! The solver is consensus ADMM. Every arc variable has one copy per endpoint;
//! the copies at a segment are projected onto `{z >= 0, sum z <= 1}` and the
//! arc update is a closed-form shift per group.
//!
//! Convergence is certified by weak duality. For the current point with group
//! gradient `d_g`, any node prices `pi >= 0` with `pi_tail + pi_head >= -d_g`
//! on every arc bound the best linear improvement, giving
//! `f(y) - f* <= sum_g d_g S_g + sum_v pi_v`. Prices come from the ADMM duals,
//! raised where an arc is still uncovered.

use crate::error::{Error, Result};
use crate::model::{FeasibilityGraph, FractionalSolution, RateGroups, StopRegistry, TransferRates};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QcpOptions {
    /// Bound on the certified optimality gap.
    pub tol: f64,
    pub max_iter: usize,
    /// Over-relaxation factor in `(0, 2)`.
    pub alpha: f64,
    /// Iterations between gap certificates.
    pub check_every: usize,
}

impl Default for QcpOptions {
    fn default() -> Self {
        QcpOptions {
            tol: 1e-6,
            max_iter: 100_000,
            alpha: 1.6,
            check_every: 10,
        }
    }
}

/// Projects `v` onto `{z >= 0, sum z <= 1}` in place.
fn project_capped_simplex(v: &mut [f64], scratch: &mut Vec<f64>) {
    let clipped: f64 = v.iter().map(|&x| x.max(0.0)).sum();
    if clipped <= 1.0 {
        for x in v.iter_mut() {
            *x = x.max(0.0);
        }
        return;
    }
    scratch.clear();
    scratch.extend(v.iter().copied().filter(|&x| x > 0.0));
    scratch.sort_unstable_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut theta = 0.0;
    for (i, &x) in scratch.iter().enumerate() {
        cum += x;
        let t = (cum - 1.0) / (i + 1) as f64;
        if x - t > 0.0 {
            theta = t;
        } else {
            break;
        }
    }
    for x in v.iter_mut() {
        *x = (*x - theta).max(0.0);
    }
}

struct Layout {
    n_groups: usize,
    /// Group of each arc (by its tail).
    arc_group: Vec<usize>,
    arcs_per_group: Vec<usize>,
    /// Copies touching each segment: `2a` sits at the tail, `2a + 1` at the head.
    node_start: Vec<usize>,
    node_copies: Vec<usize>,
    sizes: Vec<u64>,
    weight: Vec<f64>,
    target: Vec<f64>,
    probs: Vec<f64>,
}

impl Layout {
    fn new(graph: &FeasibilityGraph, registry: &StopRegistry, rates: &TransferRates) -> Self {
        let groups = RateGroups::new(registry);
        let group_of = groups.of_segments(&graph.segments);
        let tails = graph.tail_of();
        let heads = graph.heads();
        let n_groups = groups.count();
        let arc_group: Vec<usize> = tails.iter().map(|&j| group_of[j]).collect();
        let mut arcs_per_group = vec![0; n_groups];
        for &g in &arc_group {
            arcs_per_group[g] += 1;
        }

        let n = graph.len();
        let mut node_start = vec![0usize; n + 1];
        for a in 0..tails.len() {
            node_start[tails[a] + 1] += 1;
            node_start[heads[a] + 1] += 1;
        }
        for v in 0..n {
            node_start[v + 1] += node_start[v];
        }
        let mut fill = node_start.clone();
        let mut node_copies = vec![0; 2 * tails.len()];
        for a in 0..tails.len() {
            node_copies[fill[tails[a]]] = 2 * a;
            fill[tails[a]] += 1;
            node_copies[fill[heads[a]]] = 2 * a + 1;
            fill[heads[a]] += 1;
        }

        let sizes = groups.sizes(&graph.segments);
        let probs = groups.rates(rates);
        let weight = sizes
            .iter()
            .map(|&n| if n == 0 { 0.0 } else { 1.0 / (n as f64 * n as f64) })
            .collect();
        let target = sizes.iter().zip(&probs).map(|(&n, &p)| p * n as f64).collect();
        Layout {
            n_groups,
            arc_group,
            arcs_per_group,
            node_start,
            node_copies,
            sizes,
            weight,
            target,
            probs,
        }
    }

    fn copies(&self, v: usize) -> &[usize] {
        &self.node_copies[self.node_start[v]..self.node_start[v + 1]]
    }

    fn group_sums(&self, y: &[f64]) -> Vec<f64> {
        let mut s = vec![0.0; self.n_groups];
        for (a, &v) in y.iter().enumerate() {
            s[self.arc_group[a]] += v;
        }
        s
    }

    fn objective(&self, sums: &[f64]) -> f64 {
        (0..self.n_groups)
            .filter(|&g| self.sizes[g] > 0)
            .map(|g| self.weight[g] * (sums[g] - self.target[g]).powi(2))
            .sum()
    }
}

struct Certificate {
    y: Vec<f64>,
    objective: f64,
    gap: f64,
}

/// Feasible point from the per-node copies, with a certified optimality gap.
fn certify(layout: &Layout, z: &[f64], lambda: impl Fn(usize) -> f64) -> Certificate {
    let n_arcs = z.len() / 2;
    let y: Vec<f64> = (0..n_arcs).map(|a| z[2 * a].min(z[2 * a + 1]).max(0.0)).collect();
    let sums = layout.group_sums(&y);
    let objective = layout.objective(&sums);
    let grad: Vec<f64> = (0..layout.n_groups)
        .map(|g| 2.0 * layout.weight[g] * (sums[g] - layout.target[g]))
        .collect();
    let need: Vec<f64> = grad.iter().map(|&d| (-d).max(0.0)).collect();
    let linear: f64 = grad.iter().zip(&sums).map(|(d, s)| d * s).sum();

    let upper = if need.iter().all(|&c| c == 0.0) {
        0.0
    } else {
        let n = layout.node_start.len() - 1;
        let mut price: Vec<f64> = (0..n)
            .map(|v| {
                layout
                    .copies(v)
                    .iter()
                    .map(|&c| lambda(c))
                    .fold(0.0f64, f64::max)
            })
            .collect();
        let mut tail_of = vec![0usize; n_arcs];
        let mut head_of = vec![0usize; n_arcs];
        for v in 0..n {
            for &c in layout.copies(v) {
                if c % 2 == 0 {
                    tail_of[c / 2] = v;
                } else {
                    head_of[c / 2] = v;
                }
            }
        }
        for a in 0..n_arcs {
            let deficit = need[layout.arc_group[a]] - price[tail_of[a]] - price[head_of[a]];
            if deficit > 0.0 {
                price[tail_of[a]] += deficit;
            }
        }
        let from_duals: f64 = price.iter().sum();
        // every tail priced at its group's need is also a valid cover
        let mut tail_cover = vec![0.0f64; n];
        for a in 0..n_arcs {
            tail_cover[tail_of[a]] = need[layout.arc_group[a]];
        }
        from_duals.min(tail_cover.iter().sum())
    };
    Certificate {
        y,
        objective,
        gap: (linear + upper).max(0.0),
    }
}

fn solution(
    graph: &FeasibilityGraph,
    registry: &StopRegistry,
    layout: &Layout,
    cert: Certificate,
    iterations: usize,
) -> FractionalSolution {
    let mut x = vec![0.0; graph.len()];
    for j in 0..graph.len() {
        x[j] = cert.y[graph.arc_range(j)].iter().sum::<f64>().min(1.0);
    }
    let sums = layout.group_sums(&cert.y);
    let prop = |g: usize| {
        if layout.sizes[g] == 0 {
            layout.probs[g]
        } else {
            sums[g] / layout.sizes[g] as f64
        }
    };
    let groups = RateGroups::new(registry);
    FractionalSolution {
        x,
        p1: groups
            .centers
            .iter()
            .enumerate()
            .map(|(g, id)| (id.clone(), prop(g)))
            .collect(),
        p2: prop(groups.other()),
        y: cert.y,
        objective: cert.objective,
        residual: cert.gap,
        iterations,
    }
}

/// Solves the continuous relaxation to a certified gap of `tol`.
pub fn solve_qcp(
    graph: &FeasibilityGraph,
    registry: &StopRegistry,
    rates: &TransferRates,
    tol: f64,
) -> Result<FractionalSolution> {
    solve_qcp_with(
        graph,
        registry,
        rates,
        &QcpOptions {
            tol,
            ..QcpOptions::default()
        },
    )
}

pub fn solve_qcp_with(
    graph: &FeasibilityGraph,
    registry: &StopRegistry,
    rates: &TransferRates,
    opts: &QcpOptions,
) -> Result<FractionalSolution> {
    assert!(opts.tol > 0.0, "tolerance must be positive");
    let layout = Layout::new(graph, registry, rates);
    let n_arcs = graph.arc_count();
    let n_copies = 2 * n_arcs;

    // penalty on the scale of the per-group curvature
    let mut rho = {
        let scales: Vec<f64> = (0..layout.n_groups)
            .filter(|&g| layout.arcs_per_group[g] > 0)
            .map(|g| layout.weight[g] * layout.arcs_per_group[g] as f64)
            .collect();
        if scales.is_empty() {
            1.0
        } else {
            (scales.iter().map(|s| s.ln()).sum::<f64>() / scales.len() as f64).exp()
        }
    };

    let mut z = vec![0.0; n_copies];
    let mut z_prev = vec![0.0; n_copies];
    let mut u = vec![0.0; n_copies];
    let mut y = vec![0.0; n_arcs];
    let mut m = vec![0.0; n_arcs];
    let mut buf = Vec::new();
    let mut scratch = Vec::new();
    let n_nodes = graph.len();

    let mut best: Option<Certificate> = None;
    let alpha = opts.alpha;
    let mut iterations = 0;
    while iterations < opts.max_iter {
        iterations += 1;

        // arc update: closed form per group
        let mut sum_m = vec![0.0; layout.n_groups];
        for a in 0..n_arcs {
            m[a] = 0.5 * ((z[2 * a] - u[2 * a]) + (z[2 * a + 1] - u[2 * a + 1]));
            sum_m[layout.arc_group[a]] += m[a];
        }
        let shift: Vec<f64> = (0..layout.n_groups)
            .map(|g| {
                let w = layout.weight[g] / rho;
                w * (sum_m[g] - layout.target[g]) / (1.0 + layout.arcs_per_group[g] as f64 * w)
            })
            .collect();
        for a in 0..n_arcs {
            y[a] = m[a] - shift[layout.arc_group[a]];
        }

        // copy update: projection per segment
        std::mem::swap(&mut z, &mut z_prev);
        for v in 0..n_nodes {
            let copies = layout.copies(v);
            buf.clear();
            buf.extend(
                copies
                    .iter()
                    .map(|&c| alpha * y[c / 2] + (1.0 - alpha) * z_prev[c] + u[c]),
            );
            project_capped_simplex(&mut buf, &mut scratch);
            for (&c, &val) in copies.iter().zip(&buf) {
                z[c] = val;
            }
        }

        let mut r_prim = 0.0f64;
        let mut r_dual = 0.0f64;
        for c in 0..n_copies {
            let relaxed = alpha * y[c / 2] + (1.0 - alpha) * z_prev[c];
            u[c] += relaxed - z[c];
            r_prim = r_prim.max((y[c / 2] - z[c]).abs());
            r_dual = r_dual.max((z[c] - z_prev[c]).abs());
        }
        r_dual *= rho;

        if iterations % opts.check_every == 0 || iterations == opts.max_iter || n_arcs == 0 {
            let cert = certify(&layout, &z, |c| rho * u[c]);
            let converged = cert.gap <= opts.tol;
            if best.as_ref().map_or(true, |b| cert.gap < b.gap) {
                best = Some(cert);
            }
            if converged {
                break;
            }

            // rebalance the penalty when one residual dominates
            let u_max = u.iter().fold(0.0f64, |acc, &v| acc.max(v.abs())) * rho;
            let prim = r_prim;
            let dual = r_dual / u_max.max(1e-12);
            if prim > 0.0 && dual > 0.0 {
                let ratio = (prim / dual).sqrt();
                if !(0.2..=5.0).contains(&ratio) {
                    let factor = ratio.clamp(0.1, 10.0);
                    rho *= factor;
                    for v in u.iter_mut() {
                        *v /= factor;
                    }
                }
            }
        }
    }

    let cert = best.unwrap_or_else(|| certify(&layout, &z, |c| rho * u[c]));
    if cert.gap <= opts.tol {
        Ok(solution(graph, registry, &layout, cert, iterations))
    } else {
        let residual = cert.gap;
        let objective = cert.objective;
        Err(Error::NotConverged {
            iterations,
            residual,
            objective,
            best: Box::new(solution(graph, registry, &layout, cert, iterations)),
        })
    }
}
