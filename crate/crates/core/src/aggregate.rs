//! Coarser zone systems and aggregation of O-D matrices onto them.

use std::cmp::Ordering;

use crate::error::{Error, Result};
use crate::feasibility::geo_distance;
use crate::model::{OdMatrix, StopRegistry, ZoneMap};

/// Cut height whose clusters have every member within `radius_m` of every
/// other member's neighbourhood: the pairwise bound is the diameter.
pub fn cut_height_for_radius(radius_m: f64) -> f64 {
    2.0 * radius_m
}

/// Merge key: linkage distance, then the pair of cluster labels.
#[derive(Clone, Copy, PartialEq)]
struct Key {
    dist: f64,
    lo: usize,
    hi: usize,
}

impl Key {
    fn new(dist: f64, a: usize, b: usize) -> Self {
        Key {
            dist,
            lo: a.min(b),
            hi: a.max(b),
        }
    }

    fn cmp(&self, other: &Key) -> Ordering {
        self.dist
            .total_cmp(&other.dist)
            .then(self.lo.cmp(&other.lo))
            .then(self.hi.cmp(&other.hi))
    }
}

/// Complete-linkage agglomerative clustering of stops, cut at `cut_height_m`.
///
/// Clusters merge while the smallest complete-linkage distance is at most
/// the cut height, so no zone has two members farther apart than the cut. A
/// cut of 0 yields one zone per stop. Ties merge the pair with the smallest
/// zone ids first; a zone is named after its lexicographically lowest stop.
pub fn hca_clusters(registry: &StopRegistry, cut_height_m: f64) -> ZoneMap {
    assert!(cut_height_m >= 0.0, "cut height must be non-negative");
    let stops = registry.stops();
    let n = stops.len();
    if cut_height_m == 0.0 || n < 2 {
        return ZoneMap::identity(registry);
    }

    // labels are ranks of stop ids, so label order is id order
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| stops[a].stop_id.cmp(&stops[b].stop_id));
    let mut label = vec![0; n];
    for (rank, &i) in order.iter().enumerate() {
        label[i] = rank;
    }

    let mut dist = vec![0.0f64; n * n];
    for i in 0..n {
        for j in i + 1..n {
            let d = geo_distance(stops[i].coord(), stops[j].coord());
            dist[i * n + j] = d;
            dist[j * n + i] = d;
        }
    }

    let mut active = vec![true; n];
    let mut parent: Vec<usize> = (0..n).collect();
    let key = |dist: &[f64], label: &[usize], i: usize, j: usize| {
        Key::new(dist[i * n + j], label[i], label[j])
    };
    let nearest = |dist: &[f64], label: &[usize], active: &[bool], i: usize| {
        let mut best: Option<(Key, usize)> = None;
        for j in 0..n {
            if j == i || !active[j] {
                continue;
            }
            let k = key(dist, label, i, j);
            if best.map_or(true, |(b, _)| k.cmp(&b) == Ordering::Less) {
                best = Some((k, j));
            }
        }
        best.map(|(_, j)| j)
    };
    let mut nn: Vec<Option<usize>> = (0..n).map(|i| nearest(&dist, &label, &active, i)).collect();

    let mut remaining = n;
    while remaining > 1 {
        let mut best: Option<(Key, usize, usize)> = None;
        for i in 0..n {
            if let (true, Some(j)) = (active[i], nn[i]) {
                let k = key(&dist, &label, i, j);
                if best.map_or(true, |(b, _, _)| k.cmp(&b) == Ordering::Less) {
                    best = Some((k, i, j));
                }
            }
        }
        let Some((k, a, b)) = best else { break };
        if k.dist > cut_height_m {
            break;
        }

        // merge b into a
        active[b] = false;
        parent[b] = a;
        label[a] = label[a].min(label[b]);
        for c in 0..n {
            if active[c] && c != a {
                let d = dist[a * n + c].max(dist[b * n + c]);
                dist[a * n + c] = d;
                dist[c * n + a] = d;
            }
        }
        remaining -= 1;

        nn[a] = nearest(&dist, &label, &active, a);
        for c in 0..n {
            if !active[c] || c == a {
                continue;
            }
            match nn[c] {
                Some(x) if x == a || x == b => nn[c] = nearest(&dist, &label, &active, c),
                Some(x) => {
                    // linkages only grow, but the merged label may win a tie
                    if key(&dist, &label, c, a).cmp(&key(&dist, &label, c, x)) == Ordering::Less {
                        nn[c] = Some(a);
                    }
                }
                None => nn[c] = Some(a),
            }
        }
    }

    let root = |mut i: usize| {
        while parent[i] != i {
            i = parent[i];
        }
        i
    };
    ZoneMap::from_pairs(
        stops
            .iter()
            .enumerate()
            .map(|(i, s)| (s.stop_id.clone(), &stops[order[label[root(i)]]].stop_id)),
    )
    .expect("registry ids are unique")
}

/// Sums a fine matrix onto a coarser zone map over the same stops.
pub fn aggregate_od(od: &OdMatrix, coarse: &ZoneMap) -> Result<OdMatrix> {
    let fine = &od.zone_map;
    let mut to_coarse: Vec<Option<usize>> = vec![None; fine.len()];
    for (stop, z) in fine.entries() {
        let c = coarse
            .zone_of(stop)
            .ok_or_else(|| Error::ZoneMismatch(format!("stop {stop} has no coarse zone")))?;
        match to_coarse[*z] {
            None => to_coarse[*z] = Some(c),
            Some(prev) if prev != c => {
                return Err(Error::ZoneMismatch(format!(
                    "fine zone {} spans coarse zones {} and {}",
                    fine.zones()[*z],
                    coarse.zones()[prev],
                    coarse.zones()[c]
                )))
            }
            Some(_) => {}
        }
    }
    let mut out = OdMatrix::new(coarse.clone());
    for (&(o, d), &v) in &od.flow {
        let map = |z: usize| {
            to_coarse[z].ok_or_else(|| {
                Error::ZoneMismatch(format!("fine zone {} has no stops", fine.zones()[z]))
            })
        };
        out.add(map(o)?, map(d)?, v);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Stop;

    /// Stops along the equator at the given offsets in metres.
    fn line(offsets: &[f64]) -> StopRegistry {
        let deg_per_m = 180.0 / (std::f64::consts::PI * crate::feasibility::EARTH_RADIUS_M);
        StopRegistry::new(
            offsets
                .iter()
                .enumerate()
                .map(|(i, &x)| Stop {
                    stop_id: format!("s{i}"),
                    lat: 0.0,
                    lon: x * deg_per_m,
                    is_transit_center: false,
                })
                .collect(),
        )
        .unwrap()
    }

    fn groups(zm: &ZoneMap) -> Vec<Vec<String>> {
        let mut g = vec![Vec::new(); zm.len()];
        for (s, z) in zm.entries() {
            g[*z].push(s.clone());
        }
        g
    }

    #[test]
    fn zero_cut_is_identity() {
        let reg = line(&[0.0, 0.0, 10.0]);
        assert_eq!(hca_clusters(&reg, 0.0), ZoneMap::identity(&reg));
    }

    #[test]
    fn huge_cut_is_one_zone() {
        let reg = line(&[0.0, 500.0, 3000.0, 9000.0]);
        let zm = hca_clusters(&reg, 1e9);
        assert_eq!(zm.zones(), ["s0"]);
    }

    #[test]
    fn collinear_hand_case() {
        let reg = line(&[0.0, 500.0, 3000.0]);
        let zm = hca_clusters(&reg, 800.0);
        assert_eq!(groups(&zm), vec![vec!["s0", "s1"], vec!["s2"]]);
    }

    #[test]
    fn complete_linkage_refuses_chaining() {
        // single linkage would chain all three at 600 m spacing
        let reg = line(&[0.0, 600.0, 1200.0]);
        let zm = hca_clusters(&reg, 1000.0);
        assert_eq!(zm.len(), 2);
    }

    #[test]
    fn tie_merges_smallest_ids_first() {
        // s1 is 500 m from both s0 and s2; s0-s1 wins the tie
        let reg = line(&[0.0, 500.0, 1000.0]);
        let zm = hca_clusters(&reg, 600.0);
        assert_eq!(groups(&zm), vec![vec!["s0", "s1"], vec!["s2"]]);
    }

    #[test]
    fn aggregation_sums_blocks() {
        let reg = line(&[0.0, 1.0, 2.0]);
        let fine = ZoneMap::identity(&reg);
        let mut od = OdMatrix::new(fine.clone());
        od.add(0, 0, 1.0);
        od.add(0, 1, 2.0);
        od.add(1, 0, 3.0);
        od.add(2, 2, 4.0);
        let coarse = ZoneMap::from_pairs([("s0", "a"), ("s1", "a"), ("s2", "b")]).unwrap();
        let agg = aggregate_od(&od, &coarse).unwrap();
        assert_eq!(agg.get_by_id("a", "a"), 6.0);
        assert_eq!(agg.get_by_id("b", "b"), 4.0);
        assert_eq!(aggregate_od(&od, &fine).unwrap(), od);
        let one = aggregate_od(&od, &ZoneMap::single(&reg, "all")).unwrap();
        assert_eq!(one.get_by_id("all", "all"), 10.0);
    }

    #[test]
    fn inconsistent_refinement_names_the_fine_zone() {
        let fine = ZoneMap::from_pairs([("s0", "f"), ("s1", "f")]).unwrap();
        let coarse = ZoneMap::from_pairs([("s0", "a"), ("s1", "b")]).unwrap();
        let err = aggregate_od(&OdMatrix::new(fine), &coarse).unwrap_err();
        assert!(err.to_string().contains("fine zone f"), "{err}");
    }
}
