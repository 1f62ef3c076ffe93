//! Seeded synthetic networks and fare transactions.
//!
//! Stops sit on a square grid with two transit centers. Every line is an
//! L-shaped pair of grid paths meeting at one of the centers and runs in both
//! directions on its own headway. Each passenger makes a round trip: out
//! along one itinerary and back along its mirror image, so the day's last
//! alighting is the first origin and trip chaining recovers every leg.
//!
//! Demand is concentrated: itineraries are drawn from a fixed pool per
//! category with Zipf weights.

use chrono::NaiveDate;
use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::chain::{Route, RouteTable, Transaction};
use crate::error::{Error, Result};
use crate::model::{RateGroups, Seconds, Stop, StopRegistry, TransferRates};

const BASE_LAT: f64 = 42.28;
const BASE_LON: f64 = -83.74;
const METRES_PER_DEGREE: f64 = 111_195.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticConfig {
    pub n_passengers: usize,
    /// Directed routes; lines run both ways, so this must be even.
    pub n_routes: usize,
    pub n_stops: usize,
    pub transfer_rate_centers: f64,
    pub transfer_rate_other: f64,
    pub seed: u64,
    pub service_start_s: Seconds,
    pub service_end_s: Seconds,
    pub stop_spacing_m: f64,
    /// Share of passengers whose trip alights at a transit center.
    pub center_share: f64,
    /// Itineraries in each demand pool.
    pub pool_size: usize,
    /// Zipf exponent over a pool.
    pub demand_skew: f64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            n_passengers: 10_000,
            n_routes: 16,
            n_stops: 400,
            transfer_rate_centers: 0.3,
            transfer_rate_other: 0.1,
            seed: 1,
            service_start_s: 6 * 3600,
            service_end_s: 22 * 3600,
            stop_spacing_m: 400.0,
            center_share: 0.5,
            pool_size: 40,
            demand_skew: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticInstance {
    pub registry: StopRegistry,
    pub routes: RouteTable,
    pub transactions: Vec<Transaction>,
    /// Transfer rates realised by the generated population.
    pub rates: TransferRates,
}

impl SyntheticConfig {
    fn check(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(m.to_string()));
        if self.n_passengers == 0 || self.n_routes == 0 || self.n_stops == 0 {
            return fail("counts must be positive");
        }
        if self.n_routes % 2 != 0 {
            return fail("n_routes counts directed routes and must be even");
        }
        if self.n_stops < 25 {
            return fail("need at least 25 stops for a 5x5 grid");
        }
        for (name, p) in [
            ("transfer_rate_centers", self.transfer_rate_centers),
            ("transfer_rate_other", self.transfer_rate_other),
            ("center_share", self.center_share),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!("{name} = {p} is outside [0, 1]")));
            }
        }
        if self.service_end_s <= self.service_start_s {
            return fail("service window is empty");
        }
        if !(self.stop_spacing_m > 0.0) || self.pool_size == 0 || !(self.demand_skew >= 0.0) {
            return fail("stop_spacing_m, pool_size and demand_skew must be positive");
        }
        Ok(())
    }
}

struct Line {
    center: usize,
    stops: Vec<usize>,
}

struct Network {
    side: usize,
    rows: usize,
    centers: [usize; 2],
    lines: Vec<Line>,
    /// Route `2i` runs line `i` forward, `2i + 1` backward.
    route_stops: Vec<Vec<usize>>,
    offsets: Vec<Vec<Seconds>>,
    headway: Vec<Seconds>,
    phase: Vec<Seconds>,
}

impl Network {
    fn node(&self, r: usize, c: usize) -> usize {
        r * self.side + c
    }

    /// Straight grid run from `(r0, c0)` to `(r1, c1)` along one axis,
    /// excluding the start.
    fn run(&self, from: (usize, usize), to: (usize, usize), out: &mut Vec<usize>) {
        let (mut r, mut c) = from;
        while (r, c) != to {
            if r != to.0 {
                r = if to.0 > r { r + 1 } else { r - 1 };
            } else {
                c = if to.1 > c { c + 1 } else { c - 1 };
            }
            out.push(self.node(r, c));
        }
    }

    fn line_through(&self, center: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
        let (cr, cc) = (self.centers[center] / self.side, self.centers[center] % self.side);
        // endpoints on opposite sides of the center along the first axis, so
        // the two halves only meet at the center
        let rows_first = rng.gen_bool(0.5);
        let flip = rng.gen_bool(0.5);
        let (lo_r, hi_r) = (rng.gen_range(0..cr), rng.gen_range(cr + 1..self.rows));
        let (lo_c, hi_c) = (rng.gen_range(0..cc), rng.gen_range(cc + 1..self.side));
        let (any_r1, any_r2) = (rng.gen_range(0..self.rows), rng.gen_range(0..self.rows));
        let (any_c1, any_c2) = (rng.gen_range(0..self.side), rng.gen_range(0..self.side));
        let mut path;
        if rows_first {
            // P off-row, walk along its row to the center column, down to the center
            let (pr, qr) = if flip { (hi_r, lo_r) } else { (lo_r, hi_r) };
            let (p, q) = ((pr, any_c1), (qr, any_c2));
            path = vec![self.node(p.0, p.1)];
            self.run_cols_then_rows(p, (cr, cc), &mut path);
            self.run_rows_then_cols((cr, cc), q, &mut path);
        } else {
            let (pc, qc) = if flip { (hi_c, lo_c) } else { (lo_c, hi_c) };
            let (p, q) = ((any_r1, pc), (any_r2, qc));
            path = vec![self.node(p.0, p.1)];
            self.run_rows_then_cols(p, (cr, cc), &mut path);
            self.run_cols_then_rows((cr, cc), q, &mut path);
        }
        path
    }

    fn run_cols_then_rows(&self, from: (usize, usize), to: (usize, usize), out: &mut Vec<usize>) {
        self.run(from, (from.0, to.1), out);
        self.run((from.0, to.1), to, out);
    }

    fn run_rows_then_cols(&self, from: (usize, usize), to: (usize, usize), out: &mut Vec<usize>) {
        self.run(from, (to.0, from.1), out);
        self.run((to.0, from.1), to, out);
    }

    fn line_of(route: usize) -> usize {
        route / 2
    }

    fn position(&self, route: usize, stop: usize) -> Option<usize> {
        self.route_stops[route].iter().position(|&s| s == stop)
    }

    fn mirror(route: usize) -> usize {
        route ^ 1
    }

    /// First departure of `route` from its stop `pos` at or after `t`
    /// (strictly after when `strict`).
    fn next_departure(&self, route: usize, pos: usize, t: Seconds, strict: bool) -> Seconds {
        let first = self.phase[route] + self.offsets[route][pos];
        let h = self.headway[route];
        let t = if strict { t + 1 } else { t };
        if t <= first {
            return first;
        }
        first + (t - first + h - 1) / h * h
    }

    fn ride(&self, route: usize, from: usize, to: usize) -> Seconds {
        let (p, q) = (
            self.position(route, from).expect("boards on route"),
            self.position(route, to).expect("alights on route"),
        );
        self.offsets[route][q] - self.offsets[route][p]
    }
}

/// A one-way itinerary: ride `legs[0].0` from `origin` to `legs[0].1`, then
/// optionally ride `legs[1].0` on to `legs[1].1`.
#[derive(Debug, Clone)]
struct Itinerary {
    origin: usize,
    legs: Vec<(usize, usize)>,
}

impl Itinerary {
    /// The same trip in the opposite direction on the mirror routes.
    fn reversed(&self) -> Itinerary {
        let mut stops = vec![self.origin];
        stops.extend(self.legs.iter().map(|l| l.1));
        let routes: Vec<usize> = self.legs.iter().map(|l| Network::mirror(l.0)).collect();
        Itinerary {
            origin: *stops.last().unwrap(),
            legs: routes
                .iter()
                .rev()
                .zip(stops.iter().rev().skip(1))
                .map(|(&r, &s)| (r, s))
                .collect(),
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum Kind {
    CenterTransfer(usize),
    CenterDirect(usize),
    OtherTransfer,
    OtherDirect,
}

fn sample_itinerary(net: &Network, kind: Kind, rng: &mut ChaCha8Rng) -> Option<Itinerary> {
    let n_routes = net.route_stops.len();
    let is_center = |s: usize| net.centers.contains(&s);
    // index of a random non-center stop in `stops[range]`
    let pick = |stops: &[usize], rng: &mut ChaCha8Rng| -> Option<usize> {
        let cand: Vec<usize> = stops.iter().copied().filter(|&s| !is_center(s)).collect();
        cand.choose(rng).copied()
    };
    for _ in 0..200 {
        let r1 = rng.gen_range(0..n_routes);
        let s1 = &net.route_stops[r1];
        match kind {
            Kind::CenterDirect(c) | Kind::CenterTransfer(c) => {
                let Some(pc) = net.position(r1, net.centers[c]) else { continue };
                let Some(o) = pick(&s1[..pc], rng) else { continue };
                if let Kind::CenterDirect(_) = kind {
                    return Some(Itinerary {
                        origin: o,
                        legs: vec![(r1, net.centers[c])],
                    });
                }
                let r2 = rng.gen_range(0..n_routes);
                if Network::line_of(r2) == Network::line_of(r1) {
                    continue;
                }
                let Some(qc) = net.position(r2, net.centers[c]) else { continue };
                let Some(d) = pick(&net.route_stops[r2][qc + 1..], rng) else { continue };
                if d == o {
                    continue;
                }
                return Some(Itinerary {
                    origin: o,
                    legs: vec![(r1, net.centers[c]), (r2, d)],
                });
            }
            Kind::OtherDirect => {
                if s1.len() < 2 {
                    continue;
                }
                let i = rng.gen_range(0..s1.len() - 1);
                let j = rng.gen_range(i + 1..s1.len());
                let (o, d) = (s1[i], s1[j]);
                if is_center(o) || is_center(d) {
                    continue;
                }
                return Some(Itinerary {
                    origin: o,
                    legs: vec![(r1, d)],
                });
            }
            Kind::OtherTransfer => {
                // a non-center stop shared with a route of another line
                let shared: Vec<(usize, usize, usize)> = (0..n_routes)
                    .filter(|&r2| Network::line_of(r2) != Network::line_of(r1))
                    .flat_map(|r2| {
                        s1.iter()
                            .enumerate()
                            .skip(1)
                            .filter(|&(_, &a)| !is_center(a))
                            .filter_map(move |(i, &a)| {
                                net.position(r2, a)
                                    .filter(|&q| q + 1 < net.route_stops[r2].len())
                                    .map(|_| (r2, i, a))
                            })
                    })
                    .collect();
                let Some(&(r2, i, a)) = shared.choose(rng) else { continue };
                let Some(o) = pick(&s1[..i], rng) else { continue };
                let q = net.position(r2, a).unwrap();
                let Some(d) = pick(&net.route_stops[r2][q + 1..], rng) else { continue };
                if d == o {
                    continue;
                }
                return Some(Itinerary {
                    origin: o,
                    legs: vec![(r1, a), (r2, d)],
                });
            }
        }
    }
    None
}

fn build_network(cfg: &SyntheticConfig, rng: &mut ChaCha8Rng) -> Result<Network> {
    let side = (cfg.n_stops as f64).sqrt().ceil() as usize;
    let rows = cfg.n_stops / side;
    let centers = [
        (rows / 3) * side + side / 3,
        (2 * rows / 3) * side + 2 * side / 3,
    ];
    let mut net = Network {
        side,
        rows,
        centers,
        lines: Vec::new(),
        route_stops: Vec::new(),
        offsets: Vec::new(),
        headway: Vec::new(),
        phase: Vec::new(),
    };
    for i in 0..cfg.n_routes / 2 {
        let center = i % 2;
        let stops = net.line_through(center, rng);
        net.lines.push(Line { center, stops });
    }
    for line in &net.lines {
        let hops: Vec<Seconds> = (1..line.stops.len()).map(|_| rng.gen_range(60..=120)).collect();
        for backward in [false, true] {
            let mut stops = line.stops.clone();
            let mut h = hops.clone();
            if backward {
                stops.reverse();
                h.reverse();
            }
            let mut offsets = vec![0];
            for d in h {
                offsets.push(offsets.last().unwrap() + d);
            }
            let headway = rng.gen_range(10..=20) * 60;
            net.phase.push(cfg.service_start_s - 3600 + rng.gen_range(0..headway));
            net.headway.push(headway);
            net.route_stops.push(stops);
            net.offsets.push(offsets);
        }
    }
    debug_assert!(net.lines.iter().all(|l| l.stops.contains(&net.centers[l.center])));
    Ok(net)
}

fn zipf(n: usize, s: f64) -> WeightedIndex<f64> {
    WeightedIndex::new((0..n).map(|i| 1.0 / ((i + 1) as f64).powf(s))).expect("positive weights")
}

/// Generates a network, a day of transactions and the realised rates.
///
/// With both transfer rates at zero every passenger's two trips are direct.
pub fn generate_synthetic(cfg: &SyntheticConfig) -> Result<SyntheticInstance> {
    cfg.check()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let net = build_network(cfg, &mut rng)?;

    // probabilities of transferring within each category, chosen so that the
    // share of first legs among alightings matches the configured rates
    let pi = cfg.center_share;
    let r = cfg.transfer_rate_centers;
    let q_center = r / (2.0 - r);
    let r_o = cfg.transfer_rate_other;
    let q_other = if r_o == 0.0 {
        0.0
    } else if pi >= 1.0 || r_o >= 1.0 {
        return Err(Error::Config(format!(
            "transfer_rate_other = {r_o} is unreachable with center_share = {pi}"
        )));
    } else {
        r_o * (2.0 * (1.0 - pi) + pi * (1.0 + q_center)) / (2.0 * (1.0 - pi) * (1.0 - r_o))
    };
    if q_other > 1.0 {
        return Err(Error::Config(format!(
            "transfer_rate_other = {r_o} is unreachable with center_share = {pi}"
        )));
    }

    let kinds = [
        Kind::CenterTransfer(0),
        Kind::CenterTransfer(1),
        Kind::CenterDirect(0),
        Kind::CenterDirect(1),
        Kind::OtherTransfer,
        Kind::OtherDirect,
    ];
    let needed = |k: Kind| match k {
        Kind::CenterTransfer(_) => pi > 0.0 && q_center > 0.0,
        Kind::CenterDirect(_) => pi > 0.0 && q_center < 1.0,
        Kind::OtherTransfer => pi < 1.0 && q_other > 0.0,
        Kind::OtherDirect => pi < 1.0 && q_other < 1.0,
    };
    let mut pools: Vec<Vec<Itinerary>> = Vec::new();
    for &k in &kinds {
        let mut pool = Vec::new();
        if needed(k) {
            for _ in 0..cfg.pool_size {
                match sample_itinerary(&net, k, &mut rng) {
                    Some(it) => pool.push(it),
                    None => break,
                }
            }
            if pool.is_empty() {
                return Err(Error::Config(format!(
                    "the network cannot realise any {k:?} itinerary; add routes or stops"
                )));
            }
        }
        pools.push(pool);
    }
    let pool_index: Vec<Option<WeightedIndex<f64>>> = pools
        .iter()
        .map(|p| (!p.is_empty()).then(|| zipf(p.len(), cfg.demand_skew)))
        .collect();

    let stop_id = |s: usize| format!("S{s:04}");
    let day = NaiveDate::from_ymd_opt(2024, 1, 15).expect("valid date");
    let mut transactions = Vec::new();
    let groups_centers = [stop_id(net.centers[0]), stop_id(net.centers[1])];
    let mut alights = [0u64; 3];
    let mut firsts = [0u64; 3];
    let group = |s: usize| net.centers.iter().position(|&c| c == s).unwrap_or(2);
    let latest_start = cfg.service_start_s + (cfg.service_end_s - cfg.service_start_s) / 2;

    for p in 0..cfg.n_passengers {
        let kind = if rng.gen_bool(pi) {
            let c = rng.gen_range(0..2);
            if rng.gen_bool(q_center) {
                Kind::CenterTransfer(c)
            } else {
                Kind::CenterDirect(c)
            }
        } else if rng.gen_bool(q_other.min(1.0)) {
            Kind::OtherTransfer
        } else {
            Kind::OtherDirect
        };
        let k = kinds.iter().position(|&x| x == kind).unwrap();
        let it = pools[k][pool_index[k].as_ref().unwrap().sample(&mut rng)].clone();
        let card = format!("P{p:06}");
        let mut t = rng.gen_range(cfg.service_start_s..latest_start);
        for (trip, itin) in [it.clone(), it.reversed()].into_iter().enumerate() {
            if trip == 1 {
                t += rng.gen_range(3600..=6 * 3600);
            }
            let mut at = itin.origin;
            for (i, &(route, to)) in itin.legs.iter().enumerate() {
                let pos = net.position(route, at).expect("itinerary boards on route");
                let board = net.next_departure(route, pos, t, i > 0);
                transactions.push(Transaction {
                    card_id: card.clone(),
                    route_id: route_name(route),
                    board_stop: stop_id(at),
                    board_time: board,
                    service_day: day,
                });
                t = board + net.ride(route, at, to);
                alights[group(to)] += 1;
                if i + 1 < itin.legs.len() {
                    firsts[group(to)] += 1;
                }
                at = to;
            }
        }
    }

    let rate = |g: usize| {
        if alights[g] == 0 {
            0.0
        } else {
            firsts[g] as f64 / alights[g] as f64
        }
    };
    let rates = TransferRates {
        centers: groups_centers
            .iter()
            .enumerate()
            .map(|(g, id)| (id.clone(), rate(g)))
            .collect(),
        other: rate(2),
    };

    let lat_step = cfg.stop_spacing_m / METRES_PER_DEGREE;
    let lon_step = lat_step / BASE_LAT.to_radians().cos();
    let stops = (0..cfg.n_stops)
        .map(|s| Stop {
            stop_id: stop_id(s),
            lat: BASE_LAT + (s / net.side) as f64 * lat_step,
            lon: BASE_LON + (s % net.side) as f64 * lon_step,
            is_transit_center: net.centers.contains(&s),
        })
        .collect();
    let registry = StopRegistry::new(stops).expect("generated ids are unique");
    debug_assert_eq!(RateGroups::new(&registry).centers, groups_centers.to_vec());

    let routes = (0..net.route_stops.len())
        .map(|r| {
            (
                route_name(r),
                Route {
                    stops: net.route_stops[r].iter().map(|&s| stop_id(s)).collect(),
                    offsets: net.offsets[r].clone(),
                },
            )
        })
        .collect();

    Ok(SyntheticInstance {
        registry,
        routes,
        transactions,
        rates,
    })
}

fn route_name(route: usize) -> String {
    format!("L{:02}{}", route / 2, if route % 2 == 0 { 'a' } else { 'b' })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evaluate::{trip_chain, ChainParams};

    fn small(seed: u64) -> SyntheticConfig {
        SyntheticConfig {
            n_passengers: 500,
            seed,
            ..SyntheticConfig::default()
        }
    }

    #[test]
    fn deterministic_in_seed() {
        let a = generate_synthetic(&small(7)).unwrap();
        let b = generate_synthetic(&small(7)).unwrap();
        assert_eq!(a, b);
        let c = generate_synthetic(&small(8)).unwrap();
        assert_ne!(a.transactions, c.transactions);
    }

    #[test]
    fn zero_rates_give_direct_trips_only() {
        let cfg = SyntheticConfig {
            transfer_rate_centers: 0.0,
            transfer_rate_other: 0.0,
            ..small(3)
        };
        let inst = generate_synthetic(&cfg).unwrap();
        let chained = trip_chain(&inst.transactions, &inst.registry, &inst.routes, &ChainParams::default())
            .unwrap();
        assert_eq!(chained.dropped_cards, 0);
        assert_eq!(chained.truth.transfer_count(), 0);
        // one trip out and one back per passenger
        assert_eq!(chained.segments.len(), 2 * cfg.n_passengers);
        assert_eq!(inst.rates.other, 0.0);
    }

    #[test]
    fn chaining_recovers_the_generated_rates() {
        let inst = generate_synthetic(&small(11)).unwrap();
        let chained = trip_chain(&inst.transactions, &inst.registry, &inst.routes, &ChainParams::default())
            .unwrap();
        assert_eq!(chained.dropped_cards, 0);
        let groups = RateGroups::new(&inst.registry);
        let g = groups.of_segments(&chained.segments);
        let sizes = groups.sizes(&chained.segments);
        let mut firsts = vec![0u64; groups.count()];
        for (j, k) in chained.truth.transfer_to.iter().enumerate() {
            if k.is_some() {
                firsts[g[j]] += 1;
            }
        }
        let probs = groups.rates(&inst.rates);
        for i in 0..groups.count() {
            let realised = firsts[i] as f64 / sizes[i] as f64;
            assert!((realised - probs[i]).abs() < 1e-12, "group {i}");
        }
    }

    #[test]
    fn odd_route_count_is_rejected() {
        let cfg = SyntheticConfig {
            n_routes: 5,
            ..small(1)
        };
        assert!(matches!(generate_synthetic(&cfg), Err(Error::Config(_))));
    }

    #[test]
    fn single_line_cannot_transfer() {
        let cfg = SyntheticConfig {
            n_routes: 2,
            ..small(1)
        };
        assert!(matches!(generate_synthetic(&cfg), Err(Error::Config(_))));
    }
}
