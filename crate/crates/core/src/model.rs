//! Domain types shared by every stage of the pipeline.
//!
//! Segment times are integer seconds since service-day midnight. Values past
//! 86 400 are legal and denote post-midnight service on the same service day.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};

pub type Seconds = i64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stop {
    pub stop_id: String,
    pub lat: f64,
    pub lon: f64,
    pub is_transit_center: bool,
}

impl Stop {
    pub fn coord(&self) -> (f64, f64) {
        (self.lat, self.lon)
    }
}

/// Ordered stop table with an id lookup.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(from = "Vec<Stop>", into = "Vec<Stop>")]
pub struct StopRegistry {
    stops: Vec<Stop>,
    index: HashMap<String, usize>,
}

impl StopRegistry {
    /// Builds a registry, rejecting the first duplicated id.
    pub fn new(stops: Vec<Stop>) -> Result<Self, String> {
        let mut index = HashMap::with_capacity(stops.len());
        for (pos, stop) in stops.iter().enumerate() {
            if index.insert(stop.stop_id.clone(), pos).is_some() {
                return Err(stop.stop_id.clone());
            }
        }
        Ok(StopRegistry { stops, index })
    }

    pub fn stops(&self) -> &[Stop] {
        &self.stops
    }

    pub fn len(&self) -> usize {
        self.stops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stops.is_empty()
    }

    pub fn position(&self, stop_id: &str) -> Option<usize> {
        self.index.get(stop_id).copied()
    }

    pub fn get(&self, stop_id: &str) -> Option<&Stop> {
        self.position(stop_id).map(|p| &self.stops[p])
    }

    pub fn contains(&self, stop_id: &str) -> bool {
        self.index.contains_key(stop_id)
    }

    pub fn centers(&self) -> impl Iterator<Item = &Stop> {
        self.stops.iter().filter(|s| s.is_transit_center)
    }
}

impl From<Vec<Stop>> for StopRegistry {
    /// Later duplicates shadow earlier ones; use [`StopRegistry::new`] to reject them.
    fn from(stops: Vec<Stop>) -> Self {
        let index = stops
            .iter()
            .enumerate()
            .map(|(p, s)| (s.stop_id.clone(), p))
            .collect();
        StopRegistry { stops, index }
    }
}

impl From<StopRegistry> for Vec<Stop> {
    fn from(r: StopRegistry) -> Self {
        r.stops
    }
}

/// One boarding-alighting pair on a single route.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TripSegment {
    pub segment_id: String,
    pub route_id: String,
    pub board_stop: String,
    pub alight_stop: String,
    pub board_time: Seconds,
    pub alight_time: Seconds,
}

/// Observed transfer probabilities: one per transit center plus one pooled
/// value for every other stop.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TransferRates {
    pub centers: BTreeMap<String, f64>,
    pub other: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityParams {
    pub max_walk_m: f64,
    pub max_transfer_s: Seconds,
}

impl Default for FeasibilityParams {
    fn default() -> Self {
        // quarter mile, half an hour
        FeasibilityParams {
            max_walk_m: 402.0,
            max_transfer_s: 30 * 60,
        }
    }
}

/// Candidate transfers `T_j` for every segment, stored as a compressed
/// adjacency list. Arc ids are positions in [`FeasibilityGraph::heads`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityGraph {
    pub segments: Vec<TripSegment>,
    offsets: Vec<usize>,
    heads: Vec<usize>,
}

impl FeasibilityGraph {
    /// `arcs[j]` must be sorted and free of `j`.
    pub fn from_arcs(segments: Vec<TripSegment>, arcs: Vec<Vec<usize>>) -> Self {
        assert_eq!(segments.len(), arcs.len(), "one successor list per segment");
        let mut offsets = Vec::with_capacity(arcs.len() + 1);
        let mut heads = Vec::with_capacity(arcs.iter().map(Vec::len).sum());
        offsets.push(0);
        for (j, succ) in arcs.into_iter().enumerate() {
            debug_assert!(succ.windows(2).all(|w| w[0] < w[1]));
            debug_assert!(!succ.contains(&j));
            heads.extend(succ);
            offsets.push(heads.len());
        }
        FeasibilityGraph {
            segments,
            offsets,
            heads,
        }
    }

    pub fn len(&self) -> usize {
        self.segments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    pub fn arc_count(&self) -> usize {
        self.heads.len()
    }

    pub fn successors(&self, j: usize) -> &[usize] {
        &self.heads[self.offsets[j]..self.offsets[j + 1]]
    }

    /// Arc-id range of the arcs leaving `j`.
    pub fn arc_range(&self, j: usize) -> std::ops::Range<usize> {
        self.offsets[j]..self.offsets[j + 1]
    }

    pub fn heads(&self) -> &[usize] {
        &self.heads
    }

    /// Arc id of `j -> k`, if present.
    pub fn arc_id(&self, j: usize, k: usize) -> Option<usize> {
        let base = self.offsets[j];
        self.successors(j).binary_search(&k).ok().map(|p| base + p)
    }

    /// All arcs as `(tail, head)` pairs in arc-id order.
    pub fn arcs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.len()).flat_map(move |j| self.successors(j).iter().map(move |&k| (j, k)))
    }

    pub fn tail_of(&self) -> Vec<usize> {
        let mut tails = Vec::with_capacity(self.heads.len());
        for j in 0..self.len() {
            tails.extend(std::iter::repeat(j).take(self.offsets[j + 1] - self.offsets[j]));
        }
        tails
    }

    pub fn successor_lists(&self) -> Vec<Vec<usize>> {
        (0..self.len()).map(|j| self.successors(j).to_vec()).collect()
    }
}

/// Integer transfer targets derived from the observed rates.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransferTargets {
    pub centers: BTreeMap<String, u64>,
    pub other: u64,
    pub n: u64,
}

/// Index of the rate group a segment's alighting stop falls in. Centers are
/// numbered in sorted id order; the pooled "other" group comes last.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RateGroups {
    pub centers: Vec<String>,
    by_stop: HashMap<String, usize>,
}

impl RateGroups {
    pub fn new(registry: &StopRegistry) -> Self {
        let mut centers: Vec<String> = registry.centers().map(|s| s.stop_id.clone()).collect();
        centers.sort();
        let by_stop = centers
            .iter()
            .enumerate()
            .map(|(g, id)| (id.clone(), g))
            .collect();
        RateGroups { centers, by_stop }
    }

    pub fn count(&self) -> usize {
        self.centers.len() + 1
    }

    pub fn other(&self) -> usize {
        self.centers.len()
    }

    pub fn of_stop(&self, stop_id: &str) -> usize {
        self.by_stop.get(stop_id).copied().unwrap_or(self.centers.len())
    }

    pub fn of_segments(&self, segments: &[TripSegment]) -> Vec<usize> {
        segments.iter().map(|s| self.of_stop(&s.alight_stop)).collect()
    }

    /// Segments alighting in each group.
    pub fn sizes(&self, segments: &[TripSegment]) -> Vec<u64> {
        let mut sizes = vec![0u64; self.count()];
        for s in segments {
            sizes[self.of_stop(&s.alight_stop)] += 1;
        }
        sizes
    }

    /// Observed rate per group; centers missing from `rates` read as zero.
    pub fn rates(&self, rates: &TransferRates) -> Vec<f64> {
        let mut out: Vec<f64> = self
            .centers
            .iter()
            .map(|c| rates.centers.get(c).copied().unwrap_or(0.0))
            .collect();
        out.push(rates.other);
        out
    }

    pub fn targets(&self, targets: &TransferTargets) -> Vec<u64> {
        let mut out: Vec<u64> = self
            .centers
            .iter()
            .map(|c| targets.centers.get(c).copied().unwrap_or(0))
            .collect();
        out.push(targets.other);
        out
    }
}

/// Integral TIP solution. `transfer_to[j] = Some(k)` marks `j` as a first leg
/// continuing on `k`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransferAssignment {
    pub transfer_to: Vec<Option<usize>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Role {
    FirstLeg,
    SecondLeg,
    Singleton,
}

impl TransferAssignment {
    pub fn empty(len: usize) -> Self {
        TransferAssignment {
            transfer_to: vec![None; len],
        }
    }

    pub fn from_arcs(len: usize, arcs: &[(usize, usize)]) -> Self {
        let mut a = TransferAssignment::empty(len);
        for &(j, k) in arcs {
            a.transfer_to[j] = Some(k);
        }
        a
    }

    pub fn len(&self) -> usize {
        self.transfer_to.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transfer_to.is_empty()
    }

    pub fn is_first_leg(&self, j: usize) -> bool {
        self.transfer_to[j].is_some()
    }

    /// Selected arcs sorted by tail.
    pub fn arcs(&self) -> Vec<(usize, usize)> {
        self.transfer_to
            .iter()
            .enumerate()
            .filter_map(|(j, k)| k.map(|k| (j, k)))
            .collect()
    }

    pub fn transfer_count(&self) -> usize {
        self.transfer_to.iter().filter(|k| k.is_some()).count()
    }

    pub fn roles(&self) -> Vec<Role> {
        let mut roles = vec![Role::Singleton; self.len()];
        for (j, k) in self.arcs() {
            roles[j] = Role::FirstLeg;
            roles[k] = Role::SecondLeg;
        }
        roles
    }

    /// Checks the matching constraints against `graph`: every selected arc is a
    /// candidate transfer and no segment is touched by two selected arcs.
    pub fn check(&self, graph: &FeasibilityGraph) -> Result<(), String> {
        if self.len() != graph.len() {
            return Err(format!(
                "assignment covers {} segments, graph has {}",
                self.len(),
                graph.len()
            ));
        }
        let mut used = vec![false; self.len()];
        for (j, k) in self.arcs() {
            if graph.arc_id(j, k).is_none() {
                return Err(format!("{j} -> {k} is not a candidate transfer"));
            }
            for v in [j, k] {
                if std::mem::replace(&mut used[v], true) {
                    return Err(format!("segment {v} is used by two transfers"));
                }
            }
        }
        Ok(())
    }
}

/// Relaxed TIP solution. `y` is indexed by the graph's arc ids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FractionalSolution {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub p1: BTreeMap<String, f64>,
    pub p2: f64,
    pub objective: f64,
    /// Certified upper bound on `objective - optimum`.
    pub residual: f64,
    pub iterations: usize,
}

/// Rounded relaxation: a role for every segment and, for each retained first
/// leg, a probability distribution over its second-leg candidates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundedSolution {
    pub roles: Vec<Role>,
    pub probs: BTreeMap<usize, Vec<(usize, f64)>>,
    /// Threshold on `x`; `None` when no segment qualifies.
    pub threshold: Option<f64>,
}

impl RoundedSolution {
    fn with_role(&self, role: Role) -> Vec<usize> {
        self.roles
            .iter()
            .enumerate()
            .filter_map(|(j, &r)| (r == role).then_some(j))
            .collect()
    }

    pub fn first_legs(&self) -> Vec<usize> {
        self.with_role(Role::FirstLeg)
    }

    pub fn second_legs(&self) -> Vec<usize> {
        self.with_role(Role::SecondLeg)
    }

    pub fn singletons(&self) -> Vec<usize> {
        self.with_role(Role::Singleton)
    }
}

/// Assignment of every stop to one zone.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ZoneMap {
    zones: Vec<String>,
    entries: Vec<(String, usize)>,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

impl ZoneMap {
    /// Builds a map from `(stop_id, zone_id)` pairs; zones are numbered in
    /// first-appearance order. Returns the first repeated stop id on error.
    pub fn from_pairs<I, S, Z>(pairs: I) -> Result<Self, String>
    where
        I: IntoIterator<Item = (S, Z)>,
        S: Into<String>,
        Z: AsRef<str>,
    {
        let mut zones: Vec<String> = Vec::new();
        let mut zone_pos: HashMap<String, usize> = HashMap::new();
        let mut entries = Vec::new();
        let mut index = HashMap::new();
        for (stop, zone) in pairs {
            let stop = stop.into();
            let zone = zone.as_ref();
            let z = match zone_pos.get(zone) {
                Some(&z) => z,
                None => {
                    zones.push(zone.to_string());
                    zone_pos.insert(zone.to_string(), zones.len() - 1);
                    zones.len() - 1
                }
            };
            if index.insert(stop.clone(), z).is_some() {
                return Err(stop);
            }
            entries.push((stop, z));
        }
        Ok(ZoneMap {
            zones,
            entries,
            index,
        })
    }

    /// One zone per stop, named after the stop.
    pub fn identity(registry: &StopRegistry) -> Self {
        Self::from_pairs(registry.stops().iter().map(|s| (s.stop_id.clone(), &s.stop_id)))
            .expect("registry ids are unique")
    }

    /// Everything in one zone.
    pub fn single(registry: &StopRegistry, zone_id: &str) -> Self {
        Self::from_pairs(registry.stops().iter().map(|s| (s.stop_id.clone(), zone_id)))
            .expect("registry ids are unique")
    }

    pub fn zones(&self) -> &[String] {
        &self.zones
    }

    pub fn len(&self) -> usize {
        self.zones.len()
    }

    pub fn is_empty(&self) -> bool {
        self.zones.is_empty()
    }

    /// `(stop_id, zone index)` in insertion order.
    pub fn entries(&self) -> &[(String, usize)] {
        &self.entries
    }

    pub fn zone_of(&self, stop_id: &str) -> Option<usize> {
        self.index.get(stop_id).copied()
    }

    pub fn zone_id_of(&self, stop_id: &str) -> Option<&str> {
        self.zone_of(stop_id).map(|z| self.zones[z].as_str())
    }

    pub fn rebuild_index(&mut self) {
        self.index = self.entries.iter().map(|(s, z)| (s.clone(), *z)).collect();
    }
}

/// Sparse square flow matrix over a zone map's zones.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OdMatrix {
    pub zone_map: ZoneMap,
    pub flow: BTreeMap<(usize, usize), f64>,
}

impl OdMatrix {
    pub fn new(zone_map: ZoneMap) -> Self {
        OdMatrix {
            zone_map,
            flow: BTreeMap::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.zone_map.len()
    }

    pub fn add(&mut self, origin: usize, dest: usize, value: f64) {
        *self.flow.entry((origin, dest)).or_insert(0.0) += value;
    }

    pub fn get(&self, origin: usize, dest: usize) -> f64 {
        self.flow.get(&(origin, dest)).copied().unwrap_or(0.0)
    }

    pub fn get_by_id(&self, origin: &str, dest: &str) -> f64 {
        let pos = |id: &str| self.zone_map.zones().iter().position(|z| z == id);
        match (pos(origin), pos(dest)) {
            (Some(o), Some(d)) => self.get(o, d),
            _ => 0.0,
        }
    }

    pub fn total(&self) -> f64 {
        self.flow.values().sum()
    }

    /// Row-major dense copy.
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let n = self.dim();
        let mut dense = vec![vec![0.0; n]; n];
        for (&(o, d), &v) in &self.flow {
            dense[o][d] += v;
        }
        dense
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    UnknownStop { segment: String, stop: String },
    SameStop { segment: String },
    AlightBeforeBoard { segment: String },
    NegativeTime { segment: String },
    RateOutOfRange { scope: String, value: f64 },
    RateNotCenter { stop: String },
    MissingCenterRate { stop: String },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::UnknownStop { segment, stop } => {
                write!(f, "segment {segment}: unknown stop `{stop}`")
            }
            Violation::SameStop { segment } => {
                write!(f, "segment {segment}: boards and alights at the same stop")
            }
            Violation::AlightBeforeBoard { segment } => {
                write!(f, "segment {segment}: alight time precedes board time")
            }
            Violation::NegativeTime { segment } => write!(f, "segment {segment}: negative time"),
            Violation::RateOutOfRange { scope, value } => {
                write!(f, "rate {scope} = {value} is outside [0, 1]")
            }
            Violation::RateNotCenter { stop } => {
                write!(f, "rate given for `{stop}`, which is not a transit center")
            }
            Violation::MissingCenterRate { stop } => {
                write!(f, "no rate for transit center `{stop}`")
            }
        }
    }
}

/// Lists every invariant breach in an instance. An empty report means the
/// instance is admissible.
pub fn validate_instance(
    segments: &[TripSegment],
    registry: &StopRegistry,
    rates: &TransferRates,
) -> Vec<Violation> {
    let mut report = Vec::new();
    for s in segments {
        for stop in [&s.board_stop, &s.alight_stop] {
            if !registry.contains(stop) {
                report.push(Violation::UnknownStop {
                    segment: s.segment_id.clone(),
                    stop: stop.clone(),
                });
            }
        }
        if s.board_stop == s.alight_stop {
            report.push(Violation::SameStop {
                segment: s.segment_id.clone(),
            });
        }
        if s.board_time < 0 || s.alight_time < 0 {
            report.push(Violation::NegativeTime {
                segment: s.segment_id.clone(),
            });
        }
        if s.alight_time < s.board_time {
            report.push(Violation::AlightBeforeBoard {
                segment: s.segment_id.clone(),
            });
        }
    }
    let in_range = |v: f64| (0.0..=1.0).contains(&v);
    for (stop, &rate) in &rates.centers {
        match registry.get(stop) {
            Some(s) if s.is_transit_center => {}
            _ => report.push(Violation::RateNotCenter { stop: stop.clone() }),
        }
        if !in_range(rate) {
            report.push(Violation::RateOutOfRange {
                scope: stop.clone(),
                value: rate,
            });
        }
    }
    for center in registry.centers() {
        if !rates.centers.contains_key(&center.stop_id) {
            report.push(Violation::MissingCenterRate {
                stop: center.stop_id.clone(),
            });
        }
    }
    if !in_range(rates.other) {
        report.push(Violation::RateOutOfRange {
            scope: "p2".into(),
            value: rates.other,
        });
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn stop(id: &str, lat: f64, lon: f64, center: bool) -> Stop {
        Stop {
            stop_id: id.into(),
            lat,
            lon,
            is_transit_center: center,
        }
    }

    fn seg(id: &str, route: &str, b: &str, a: &str, s: Seconds, t: Seconds) -> TripSegment {
        TripSegment {
            segment_id: id.into(),
            route_id: route.into(),
            board_stop: b.into(),
            alight_stop: a.into(),
            board_time: s,
            alight_time: t,
        }
    }

    fn instance() -> (Vec<TripSegment>, StopRegistry, TransferRates) {
        let registry = StopRegistry::new(vec![
            stop("A", 42.28, -83.74, false),
            stop("BTC", 42.279, -83.745, true),
            stop("C", 42.27, -83.75, false),
        ])
        .unwrap();
        let segments = vec![
            seg("s1", "R1", "A", "BTC", 100, 200),
            seg("s2", "R2", "BTC", "C", 300, 400),
            seg("s3", "R1", "C", "A", 500, 900),
        ];
        let rates = TransferRates {
            centers: [("BTC".to_string(), 0.5)].into(),
            other: 0.1,
        };
        (segments, registry, rates)
    }

    #[test]
    fn well_formed_instance_has_empty_report() {
        let (segments, registry, rates) = instance();
        assert!(validate_instance(&segments, &registry, &rates).is_empty());
    }

    #[test]
    fn alight_before_board_is_reported() {
        let (mut segments, registry, rates) = instance();
        segments[1].alight_time = 250;
        let report = validate_instance(&segments, &registry, &rates);
        assert_eq!(
            report,
            vec![Violation::AlightBeforeBoard {
                segment: "s2".into()
            }]
        );
    }

    #[test]
    fn rate_above_one_is_reported() {
        let (segments, registry, mut rates) = instance();
        rates.other = 1.2;
        let report = validate_instance(&segments, &registry, &rates);
        assert_eq!(report.len(), 1);
        assert!(report[0].to_string().contains("p2"));
    }

    #[test]
    fn unknown_stop_and_missing_center_rate() {
        let (mut segments, registry, mut rates) = instance();
        segments[0].board_stop = "ZZZ".into();
        rates.centers.clear();
        let report = validate_instance(&segments, &registry, &rates);
        assert!(report.contains(&Violation::UnknownStop {
            segment: "s1".into(),
            stop: "ZZZ".into()
        }));
        assert!(report.contains(&Violation::MissingCenterRate { stop: "BTC".into() }));
    }

    #[test]
    fn registry_rejects_duplicates() {
        let err = StopRegistry::new(vec![stop("BTC", 0.0, 0.0, true), stop("BTC", 1.0, 1.0, true)])
            .unwrap_err();
        assert_eq!(err, "BTC");
    }

    #[test]
    fn assignment_partition_and_check() {
        let (segments, _, _) = instance();
        let graph = FeasibilityGraph::from_arcs(segments, vec![vec![1], vec![2], vec![]]);
        let a = TransferAssignment::from_arcs(3, &[(0, 1)]);
        assert!(a.check(&graph).is_ok());
        assert_eq!(a.roles(), vec![Role::FirstLeg, Role::SecondLeg, Role::Singleton]);

        let chain = TransferAssignment::from_arcs(3, &[(0, 1), (1, 2)]);
        assert!(chain.check(&graph).is_err());
        let bogus = TransferAssignment::from_arcs(3, &[(0, 2)]);
        assert!(bogus.check(&graph).is_err());
    }

    #[test]
    fn zone_map_orders_zones_by_first_appearance() {
        let zm = ZoneMap::from_pairs([("A", "z2"), ("B", "z1"), ("C", "z2")]).unwrap();
        assert_eq!(zm.zones(), &["z2".to_string(), "z1".to_string()]);
        assert_eq!(zm.zone_of("C"), Some(0));
        assert!(ZoneMap::from_pairs([("A", "z"), ("A", "y")]).is_err());
    }

    #[test]
    fn graph_arc_ids() {
        let (segments, _, _) = instance();
        let graph = FeasibilityGraph::from_arcs(segments, vec![vec![1, 2], vec![2], vec![]]);
        assert_eq!(graph.arc_count(), 3);
        assert_eq!(graph.arc_id(0, 2), Some(1));
        assert_eq!(graph.arc_id(1, 2), Some(2));
        assert_eq!(graph.arc_id(2, 0), None);
        assert_eq!(graph.tail_of(), vec![0, 0, 1]);
    }
}
