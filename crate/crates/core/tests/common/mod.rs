//! Random instances and reference implementations shared by the integration
//! tests.
#![allow(dead_code)]

use std::collections::BTreeMap;

use odflow::feasibility::geo_distance;
use odflow::model::{Stop, StopRegistry, TransferRates, TripSegment, ZoneMap};
use rand::Rng;

const METRES_PER_DEG_LAT: f64 = 111_195.0;

/// Stops scattered over a few kilometres; the first `n_centers` (by id) are
/// transit centers. Spacing is tight enough that many pairs are walkable.
pub fn random_registry(rng: &mut impl Rng, n_stops: usize, n_centers: usize) -> StopRegistry {
    random_registry_within(rng, n_stops, n_centers, 1500.0)
}

/// Stops in an `extent_m` by `0.4 * extent_m` box.
pub fn random_registry_within(
    rng: &mut impl Rng,
    n_stops: usize,
    n_centers: usize,
    extent_m: f64,
) -> StopRegistry {
    let stops = (0..n_stops)
        .map(|i| Stop {
            stop_id: format!("s{i:02}"),
            lat: 42.28 + rng.gen_range(0.0..extent_m) / METRES_PER_DEG_LAT,
            lon: -83.74 + rng.gen_range(0.0..0.4 * extent_m) / METRES_PER_DEG_LAT,
            is_transit_center: i < n_centers,
        })
        .collect();
    StopRegistry::new(stops).unwrap()
}

/// Segments on a handful of routes packed into a two-hour window.
pub fn random_segments(rng: &mut impl Rng, registry: &StopRegistry, n: usize) -> Vec<TripSegment> {
    random_segments_within(rng, registry, n, 120)
}

/// Segments boarding within `window_min` minutes of 07:00.
pub fn random_segments_within(
    rng: &mut impl Rng,
    registry: &StopRegistry,
    n: usize,
    window_min: i64,
) -> Vec<TripSegment> {
    let ids: Vec<&str> = registry.stops().iter().map(|s| s.stop_id.as_str()).collect();
    (0..n)
        .map(|i| {
            let b = rng.gen_range(0..ids.len());
            let mut a = rng.gen_range(0..ids.len() - 1);
            if a >= b {
                a += 1;
            }
            let board_time = 7 * 3600 + 60 * rng.gen_range(0..window_min);
            TripSegment {
                segment_id: format!("t{i:02}"),
                route_id: format!("R{}", rng.gen_range(0..3)),
                board_stop: ids[b].to_string(),
                alight_stop: ids[a].to_string(),
                board_time,
                alight_time: board_time + 60 * rng.gen_range(1..20),
            }
        })
        .collect()
}

/// Rates on a coarse grid so rounding ties and exact halves occur.
pub fn random_rates(rng: &mut impl Rng, registry: &StopRegistry) -> TransferRates {
    let mut draw = || rng.gen_range(0..=8) as f64 / 8.0;
    let centers: BTreeMap<String, f64> =
        registry.centers().map(|s| (s.stop_id.clone(), 0.0)).collect();
    let centers = centers.into_keys().map(|id| (id, draw())).collect();
    TransferRates {
        centers,
        other: draw(),
    }
}

/// Complete-linkage clustering by exhaustive search over cluster pairs at
/// every step.
pub fn naive_hca(registry: &StopRegistry, cut: f64) -> ZoneMap {
    let stops = registry.stops();
    let mut clusters: Vec<Vec<usize>> = (0..stops.len()).map(|i| vec![i]).collect();
    let low = |c: &[usize]| c.iter().map(|&i| stops[i].stop_id.as_str()).min().unwrap();
    let linkage = |a: &[usize], b: &[usize]| {
        let mut d: f64 = 0.0;
        for &i in a {
            for &j in b {
                d = d.max(geo_distance(stops[i].coord(), stops[j].coord()));
            }
        }
        d
    };
    if cut > 0.0 {
        loop {
            let mut best: Option<(f64, &str, &str, usize, usize)> = None;
            for a in 0..clusters.len() {
                for b in a + 1..clusters.len() {
                    let d = linkage(&clusters[a], &clusters[b]);
                    let (la, lb) = (low(&clusters[a]), low(&clusters[b]));
                    let (lo, hi) = if la < lb { (la, lb) } else { (lb, la) };
                    let better = match best {
                        None => true,
                        Some((bd, blo, bhi, _, _)) => {
                            d.total_cmp(&bd).then(lo.cmp(blo)).then(hi.cmp(bhi)).is_lt()
                        }
                    };
                    if better {
                        best = Some((d, lo, hi, a, b));
                    }
                }
            }
            match best {
                Some((d, _, _, a, b)) if d <= cut => {
                    let moved = clusters.remove(b);
                    clusters[a].extend(moved);
                }
                _ => break,
            }
        }
    }
    let mut zone_of = vec![String::new(); stops.len()];
    for c in &clusters {
        let name = low(c).to_string();
        for &i in c {
            zone_of[i] = name.clone();
        }
    }
    ZoneMap::from_pairs(stops.iter().map(|s| s.stop_id.clone()).zip(zone_of)).unwrap()
}
