//! Candidate-transfer sets and observed-transfer targets.

use std::collections::HashMap;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{
    FeasibilityGraph, FeasibilityParams, RateGroups, StopRegistry, TransferRates, TransferTargets,
    TripSegment,
};

pub const EARTH_RADIUS_M: f64 = 6_371_000.0;

/// Great-circle distance in meters between two `(lat, lon)` points in degrees.
pub fn geo_distance(a: (f64, f64), b: (f64, f64)) -> f64 {
    let (lat1, lon1) = (a.0.to_radians(), a.1.to_radians());
    let (lat2, lon2) = (b.0.to_radians(), b.1.to_radians());
    let dlat = lat2 - lat1;
    let dlon = lon2 - lon1;
    let cc = lat1.cos() * lat2.cos();
    let h = (dlat / 2.0).sin().powi(2) + cc * (dlon / 2.0).sin().powi(2);
    // 1 - h is the haversine to b's antipode; summing it directly keeps
    // near-antipodal pairs from cancelling
    let h_anti = ((lat1 + lat2) / 2.0).sin().powi(2) + cc * (dlon / 2.0).cos().powi(2);
    2.0 * EARTH_RADIUS_M * h.sqrt().atan2(h_anti.sqrt())
}

struct ResolvedSegment<'a> {
    route: &'a str,
    board: usize,
    alight: usize,
    board_time: i64,
    alight_time: i64,
}

fn resolve<'a>(segments: &'a [TripSegment], registry: &StopRegistry) -> Vec<ResolvedSegment<'a>> {
    segments
        .iter()
        .map(|s| ResolvedSegment {
            route: &s.route_id,
            board: registry
                .position(&s.board_stop)
                .unwrap_or_else(|| panic!("unknown stop {}", s.board_stop)),
            alight: registry
                .position(&s.alight_stop)
                .unwrap_or_else(|| panic!("unknown stop {}", s.alight_stop)),
            board_time: s.board_time,
            alight_time: s.alight_time,
        })
        .collect()
}

fn is_candidate(
    j: &ResolvedSegment,
    k: &ResolvedSegment,
    registry: &StopRegistry,
    params: &FeasibilityParams,
) -> bool {
    let gap = k.board_time - j.alight_time;
    j.route != k.route
        && gap > 0
        && gap < params.max_transfer_s
        && geo_distance(
            registry.stops()[j.alight].coord(),
            registry.stops()[k.board].coord(),
        ) < params.max_walk_m
}

/// Builds `T_j` for every segment. Segments are bucketed by boarding stop and
/// sorted by boarding time, so each tail only scans stops within walking range
/// and the slice of departures inside the transfer window.
///
/// Panics if a segment references a stop missing from `registry`; run
/// [`crate::model::validate_instance`] first.
pub fn build_feasibility(
    segments: &[TripSegment],
    registry: &StopRegistry,
    params: &FeasibilityParams,
) -> FeasibilityGraph {
    let resolved = resolve(segments, registry);
    let stops = registry.stops();

    // departures per boarding stop, sorted by (time, index)
    let mut departures: Vec<Vec<(i64, usize)>> = vec![Vec::new(); stops.len()];
    for (k, s) in resolved.iter().enumerate() {
        departures[s.board].push((s.board_time, k));
    }
    for d in &mut departures {
        d.sort_unstable();
    }

    let alight_stops: Vec<usize> = {
        let mut v: Vec<usize> = resolved.iter().map(|s| s.alight).collect();
        v.sort_unstable();
        v.dedup();
        v
    };
    let walkable: HashMap<usize, Vec<usize>> = alight_stops
        .par_iter()
        .map(|&a| {
            let near = (0..stops.len())
                .filter(|&b| {
                    !departures[b].is_empty()
                        && geo_distance(stops[a].coord(), stops[b].coord()) < params.max_walk_m
                })
                .collect();
            (a, near)
        })
        .collect();

    let arcs: Vec<Vec<usize>> = resolved
        .par_iter()
        .map(|j| {
            let mut succ = Vec::new();
            let lo = j.alight_time + 1;
            let hi = j.alight_time + params.max_transfer_s;
            for &b in &walkable[&j.alight] {
                let deps = &departures[b];
                let start = deps.partition_point(|&(t, _)| t < lo);
                for &(t, k) in &deps[start..] {
                    if t >= hi {
                        break;
                    }
                    if resolved[k].route != j.route {
                        succ.push(k);
                    }
                }
            }
            succ.sort_unstable();
            succ
        })
        .collect();

    FeasibilityGraph::from_arcs(segments.to_vec(), arcs)
}

/// Reference construction checking every ordered pair.
pub fn build_feasibility_naive(
    segments: &[TripSegment],
    registry: &StopRegistry,
    params: &FeasibilityParams,
) -> FeasibilityGraph {
    let resolved = resolve(segments, registry);
    let arcs = (0..resolved.len())
        .map(|j| {
            (0..resolved.len())
                .filter(|&k| k != j && is_candidate(&resolved[j], &resolved[k], registry, params))
                .collect()
        })
        .collect();
    FeasibilityGraph::from_arcs(segments.to_vec(), arcs)
}

/// Round half to even on a nonnegative value.
fn round_half_even(v: f64) -> u64 {
    let floor = v.floor();
    let frac = v - floor;
    let base = floor as u64;
    if frac > 0.5 || (frac == 0.5 && base % 2 == 1) {
        base + 1
    } else {
        base
    }
}

/// Converts rates into integer transfer counts, `round_half_even(p * count)`
/// per group.
pub fn observed_transfer_targets(
    segments: &[TripSegment],
    registry: &StopRegistry,
    rates: &TransferRates,
) -> TransferTargets {
    let groups = RateGroups::new(registry);
    let sizes = groups.sizes(segments);
    let probs = groups.rates(rates);
    let deltas: Vec<u64> = sizes
        .iter()
        .zip(&probs)
        .map(|(&count, &p)| round_half_even(p * count as f64))
        .collect();
    TransferTargets {
        centers: groups
            .centers
            .iter()
            .cloned()
            .zip(deltas.iter().copied())
            .collect(),
        other: deltas[groups.other()],
        n: deltas.iter().sum(),
    }
}

/// Writes `tail_segment,head_segment` rows for inspection.
pub fn write_graph_csv(graph: &FeasibilityGraph, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = std::io::BufWriter::new(file);
    let io = |e| Error::io(path, e);
    writeln!(out, "tail_segment,head_segment").map_err(io)?;
    for (j, k) in graph.arcs() {
        writeln!(
            out,
            "{},{}",
            graph.segments[j].segment_id, graph.segments[k].segment_id
        )
        .map_err(io)?;
    }
    out.flush().map_err(io)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Stop;
    use proptest::prelude::*;

    fn stop(id: &str, lat: f64, lon: f64, center: bool) -> Stop {
        Stop {
            stop_id: id.into(),
            lat,
            lon,
            is_transit_center: center,
        }
    }

    fn seg(id: &str, route: &str, b: &str, a: &str, s: i64, t: i64) -> TripSegment {
        TripSegment {
            segment_id: id.into(),
            route_id: route.into(),
            board_stop: b.into(),
            alight_stop: a.into(),
            board_time: s,
            alight_time: t,
        }
    }

    /// Spherical law of cosines, independent of the haversine path.
    fn cosine_law(a: (f64, f64), b: (f64, f64)) -> f64 {
        let (p1, p2) = (a.0.to_radians(), b.0.to_radians());
        let dl = (b.1 - a.1).to_radians();
        let c = p1.sin() * p2.sin() + p1.cos() * p2.cos() * dl.cos();
        EARTH_RADIUS_M * c.clamp(-1.0, 1.0).acos()
    }

    #[test]
    fn distance_identity_and_one_degree() {
        assert_eq!(geo_distance((42.0, -83.0), (42.0, -83.0)), 0.0);
        let d = geo_distance((0.0, 0.0), (0.0, 1.0));
        assert!((d - 111_195.0).abs() < 10.0, "{d}");
        assert!((d - cosine_law((0.0, 0.0), (0.0, 1.0))).abs() < 1e-6);
    }

    #[test]
    fn antipodal_is_half_circumference() {
        let d = geo_distance((0.0, 0.0), (0.0, 180.0));
        assert!((d - std::f64::consts::PI * EARTH_RADIUS_M).abs() < 1e-3);
        let d = geo_distance((90.0, 0.0), (-90.0, 0.0));
        assert!((d - std::f64::consts::PI * EARTH_RADIUS_M).abs() < 1e-3);
        // off the equator, where the naive form cancels
        let d = geo_distance((10.0, 20.0), (-10.0, -160.0));
        assert!((d - std::f64::consts::PI * EARTH_RADIUS_M).abs() < 1e-3);
    }

    proptest! {
        #[test]
        fn distance_is_symmetric(
            la in -90.0f64..90.0, lo in -180.0f64..180.0,
            lb in -90.0f64..90.0, lp in -180.0f64..180.0,
        ) {
            let ab = geo_distance((la, lo), (lb, lp));
            let ba = geo_distance((lb, lp), (la, lo));
            prop_assert!(ab >= 0.0);
            prop_assert!((ab - ba).abs() <= 1e-9 * ab.max(1.0));
        }

        #[test]
        fn distance_agrees_with_cosine_law(
            la in -80.0f64..80.0, lo in -170.0f64..170.0,
            dla in -5.0f64..5.0, dlo in -5.0f64..5.0,
        ) {
            let a = (la, lo);
            let b = (la + dla, lo + dlo);
            let h = geo_distance(a, b);
            // the cosine law loses precision at short range
            prop_assert!((h - cosine_law(a, b)).abs() < 0.5);
        }
    }

    fn registry() -> StopRegistry {
        // X and Xp are about 100 m apart
        StopRegistry::new(vec![
            stop("A", 42.2800, -83.7400, false),
            stop("X", 42.2900, -83.7400, false),
            stop("Xp", 42.2909, -83.7400, false),
            stop("B", 42.3000, -83.7400, false),
            stop("BTC", 42.2790, -83.7450, true),
        ])
        .unwrap()
    }

    #[test]
    fn walkable_transfer_within_window_is_present() {
        let reg = registry();
        let d = geo_distance(reg.get("X").unwrap().coord(), reg.get("Xp").unwrap().coord());
        assert!((d - 100.0).abs() < 1.0, "{d}");
        let segs = vec![
            seg("j", "R1", "A", "X", 8 * 3600, 8 * 3600 + 600),
            seg("k", "R2", "Xp", "B", 8 * 3600 + 1200, 8 * 3600 + 1800),
        ];
        let g = build_feasibility(&segs, &reg, &FeasibilityParams::default());
        assert_eq!(g.successors(0), &[1]);
        assert!(g.successors(1).is_empty());
    }

    #[test]
    fn same_route_is_excluded() {
        let reg = registry();
        let segs = vec![
            seg("j", "R1", "A", "X", 0, 600),
            seg("k", "R1", "Xp", "B", 1200, 1800),
        ];
        let g = build_feasibility(&segs, &reg, &FeasibilityParams::default());
        assert_eq!(g.arc_count(), 0);
    }

    #[test]
    fn zero_gap_is_excluded() {
        let reg = registry();
        let segs = vec![
            seg("j", "R1", "A", "X", 0, 600),
            seg("k", "R2", "Xp", "B", 600, 1800),
        ];
        let g = build_feasibility(&segs, &reg, &FeasibilityParams::default());
        assert_eq!(g.arc_count(), 0);
    }

    #[test]
    fn window_edge_is_exclusive() {
        let reg = registry();
        let p = FeasibilityParams::default();
        let segs = vec![
            seg("j", "R1", "A", "X", 0, 600),
            seg("k", "R2", "Xp", "B", 600 + p.max_transfer_s, 5000),
            seg("m", "R3", "Xp", "B", 599 + p.max_transfer_s, 5000),
        ];
        let g = build_feasibility(&segs, &reg, &p);
        assert_eq!(g.successors(0), &[2]);
    }

    #[test]
    fn rounding_rule() {
        assert_eq!(round_half_even(23.2), 23);
        assert_eq!(round_half_even(22.5), 22);
        assert_eq!(round_half_even(23.5), 24);
        assert_eq!(round_half_even(0.0), 0);
        assert_eq!(round_half_even(0.51), 1);
    }

    #[test]
    fn targets_from_rates() {
        let reg = registry();
        let mut segs: Vec<TripSegment> = (0..100)
            .map(|i| seg(&format!("c{i}"), "R1", "A", "BTC", 0, 10))
            .collect();
        let rates = TransferRates {
            centers: [("BTC".to_string(), 0.232)].into(),
            other: 0.5,
        };
        let t = observed_transfer_targets(&segs, &reg, &rates);
        assert_eq!(t.centers["BTC"], 23);
        // nothing alights elsewhere
        assert_eq!(t.other, 0);
        assert_eq!(t.n, 23);

        segs.extend((0..13).map(|i| seg(&format!("o{i}"), "R1", "A", "B", 0, 10)));
        let t = observed_transfer_targets(&segs, &reg, &rates);
        assert_eq!(t.other, 6);
        assert_eq!(t.n, 29);
    }

    #[test]
    fn go_pass_rates_on_hundred_segment_groups() {
        let mut stops = registry().stops().to_vec();
        stops.push(stop("YTC", 42.24, -83.61, true));
        let reg = StopRegistry::new(stops).unwrap();
        let segs: Vec<TripSegment> = (0..300)
            .map(|i| {
                let alight = ["BTC", "YTC", "B"][i / 100];
                seg(&format!("s{i}"), "R1", "A", alight, 0, 10)
            })
            .collect();
        let rates = TransferRates {
            centers: [("BTC".to_string(), 0.232), ("YTC".to_string(), 0.591)].into(),
            other: 0.062,
        };
        let t = observed_transfer_targets(&segs, &reg, &rates);
        assert_eq!(t.centers["BTC"], 23);
        assert_eq!(t.centers["YTC"], 59);
        assert_eq!(t.other, 6);
        assert_eq!(t.n, 88);
    }
}
