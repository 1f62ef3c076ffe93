//! Ground truth from boarding-only fare transactions.
//!
//! Each card's boardings on a service day form one chain. A leg alights at
//! the stop downstream on its route nearest the card's next boarding; the
//! day's last leg alights nearest the day's first origin. Consecutive legs
//! on different routes become a transfer when the walk and the wait fall
//! inside the feasibility thresholds.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use chrono::NaiveDate;

use crate::error::{Error, Result};
use crate::feasibility::geo_distance;
use crate::ingest::{create, finish, format_time, open_csv, parse_time, records};
use crate::model::{Seconds, StopRegistry, TransferAssignment, TripSegment};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Transaction {
    pub card_id: String,
    pub route_id: String,
    pub board_stop: String,
    pub board_time: Seconds,
    pub service_day: NaiveDate,
}

/// Ordered stops of one directed route with scheduled offsets from the
/// route's first stop.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Route {
    pub stops: Vec<String>,
    pub offsets: Vec<Seconds>,
}

impl Route {
    pub fn position(&self, stop_id: &str) -> Option<usize> {
        self.stops.iter().position(|s| s == stop_id)
    }
}

pub type RouteTable = BTreeMap<String, Route>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChainParams {
    pub walk_m: f64,
    pub transfer_s: Seconds,
}

impl Default for ChainParams {
    fn default() -> Self {
        ChainParams {
            walk_m: 402.0,
            transfer_s: 1800,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainResult {
    pub segments: Vec<TripSegment>,
    pub truth: TransferAssignment,
    /// Card-days discarded because some leg could not be inferred.
    pub dropped_cards: usize,
}

struct Leg {
    route: String,
    board: String,
    alight: String,
    board_time: Seconds,
    alight_time: Seconds,
}

fn infer_day(
    txs: &[&Transaction],
    offset: Seconds,
    registry: &StopRegistry,
    routes: &RouteTable,
    params: &ChainParams,
) -> Result<Option<Vec<Leg>>> {
    let coord = |id: &str| registry.get(id).map(|s| s.coord());
    let mut legs = Vec::with_capacity(txs.len());
    for (i, tx) in txs.iter().enumerate() {
        let route = routes
            .get(&tx.route_id)
            .ok_or_else(|| Error::UnknownRoute(tx.route_id.clone()))?;
        let Some(p) = route.position(&tx.board_stop) else {
            return Ok(None);
        };
        let target = if i + 1 < txs.len() {
            &txs[i + 1].board_stop
        } else {
            &txs[0].board_stop
        };
        let Some(target) = coord(target) else {
            return Ok(None);
        };
        let mut best: Option<(f64, usize)> = None;
        for q in p + 1..route.stops.len() {
            let Some(c) = coord(&route.stops[q]) else { continue };
            let d = geo_distance(c, target);
            if best.map_or(true, |(bd, _)| d < bd) {
                best = Some((d, q));
            }
        }
        let Some((_, q)) = best.filter(|&(d, _)| d < params.walk_m) else {
            return Ok(None);
        };
        let board_time = tx.board_time + offset;
        let alight_time = board_time + route.offsets[q] - route.offsets[p];
        if i + 1 < txs.len() && alight_time >= txs[i + 1].board_time + offset {
            return Ok(None);
        }
        legs.push(Leg {
            route: tx.route_id.clone(),
            board: tx.board_stop.clone(),
            alight: route.stops[q].clone(),
            board_time,
            alight_time,
        });
    }
    Ok(Some(legs))
}

/// Infers trip segments and their true transfers from fare transactions.
///
/// Days are laid end to end: times on the `d`-th distinct service day are
/// shifted by `d * 86400` seconds so segments from different days never
/// look like transfers. Segment ids are `card/day/index`.
pub fn trip_chain(
    transactions: &[Transaction],
    registry: &StopRegistry,
    routes: &RouteTable,
    params: &ChainParams,
) -> Result<ChainResult> {
    let first_day = transactions.iter().map(|t| t.service_day).min();
    let mut days: BTreeMap<(&str, NaiveDate), Vec<&Transaction>> = BTreeMap::new();
    for tx in transactions {
        if !routes.contains_key(&tx.route_id) {
            return Err(Error::UnknownRoute(tx.route_id.clone()));
        }
        days.entry((&tx.card_id, tx.service_day)).or_default().push(tx);
    }

    let mut segments = Vec::new();
    let mut links = Vec::new();
    let mut dropped_cards = 0;
    for ((card, day), mut txs) in days {
        txs.sort_by_key(|t| t.board_time);
        let offset = (day - first_day.expect("non-empty")).num_days() * 86_400;
        let Some(legs) = infer_day(&txs, offset, registry, routes, params)? else {
            dropped_cards += 1;
            continue;
        };
        let base = segments.len();
        let mut is_second = false;
        for (i, leg) in legs.iter().enumerate() {
            if let Some(next) = legs.get(i + 1) {
                let gap = next.board_time - leg.alight_time;
                let near = match (registry.get(&leg.alight), registry.get(&next.board)) {
                    (Some(a), Some(b)) => geo_distance(a.coord(), b.coord()) < params.walk_m,
                    _ => false,
                };
                if !is_second && next.route != leg.route && gap > 0 && gap < params.transfer_s && near
                {
                    links.push((base + i, base + i + 1));
                    is_second = true;
                    continue;
                }
            }
            is_second = false;
        }
        for (i, leg) in legs.into_iter().enumerate() {
            segments.push(TripSegment {
                segment_id: format!("{card}/{day}/{i}"),
                route_id: leg.route,
                board_stop: leg.board,
                alight_stop: leg.alight,
                board_time: leg.board_time,
                alight_time: leg.alight_time,
            });
        }
    }
    let truth = TransferAssignment::from_arcs(segments.len(), &links);
    Ok(ChainResult {
        segments,
        truth,
        dropped_cards,
    })
}

const TRANSACTIONS_HEADER: [&str; 5] = ["card_id", "service_day", "route_id", "board_stop", "board_time"];
const ROUTES_HEADER: [&str; 4] = ["route_id", "seq", "stop_id", "offset_s"];

pub fn parse_transactions(path: &Path, registry: &StopRegistry) -> Result<Vec<Transaction>> {
    let mut reader = open_csv(path, &TRANSACTIONS_HEADER)?;
    let mut out = Vec::new();
    for row in records(path, &mut reader) {
        let (line, rec) = row?;
        let service_day = NaiveDate::parse_from_str(&rec[1], "%Y-%m-%d")
            .map_err(|_| Error::parse(path, line, format!("bad service day `{}`", &rec[1])))?;
        if !registry.contains(&rec[3]) {
            return Err(Error::parse(path, line, format!("unknown stop `{}`", &rec[3])));
        }
        let board_time = parse_time(&rec[4])
            .ok_or_else(|| Error::parse(path, line, format!("bad time `{}`", &rec[4])))?;
        out.push(Transaction {
            card_id: rec[0].to_string(),
            route_id: rec[2].to_string(),
            board_stop: rec[3].to_string(),
            board_time,
            service_day,
        });
    }
    Ok(out)
}

pub fn write_transactions(txs: &[Transaction], path: &Path) -> Result<()> {
    let mut out = create(path)?;
    let io = |e| Error::io(path, e);
    writeln!(out, "{}", TRANSACTIONS_HEADER.join(",")).map_err(io)?;
    for t in txs {
        writeln!(
            out,
            "{},{},{},{},{}",
            t.card_id,
            t.service_day.format("%Y-%m-%d"),
            t.route_id,
            t.board_stop,
            format_time(t.board_time)
        )
        .map_err(io)?;
    }
    finish(path, out)
}

/// Reads `route_id,seq,stop_id,offset_s`. Rows of a route may come in any
/// order; `seq` must then run `0..len` and offsets must not decrease.
pub fn parse_routes(path: &Path, registry: &StopRegistry) -> Result<RouteTable> {
    let mut reader = open_csv(path, &ROUTES_HEADER)?;
    let mut rows: BTreeMap<String, Vec<(usize, String, Seconds, u64)>> = BTreeMap::new();
    for row in records(path, &mut reader) {
        let (line, rec) = row?;
        let seq: usize = rec[1]
            .parse()
            .map_err(|_| Error::parse(path, line, format!("bad seq `{}`", &rec[1])))?;
        if !registry.contains(&rec[2]) {
            return Err(Error::parse(path, line, format!("unknown stop `{}`", &rec[2])));
        }
        let offset: Seconds = rec[3]
            .parse()
            .ok()
            .filter(|&o: &Seconds| o >= 0)
            .ok_or_else(|| Error::parse(path, line, format!("bad offset `{}`", &rec[3])))?;
        rows.entry(rec[0].to_string())
            .or_default()
            .push((seq, rec[2].to_string(), offset, line));
    }
    let mut table = RouteTable::new();
    for (id, mut stops) in rows {
        stops.sort_by_key(|r| r.0);
        for (i, w) in stops.iter().enumerate() {
            if w.0 != i {
                return Err(Error::parse(path, w.3, format!("route `{id}` skips or repeats seq {i}")));
            }
            if i > 0 && w.2 < stops[i - 1].2 {
                return Err(Error::parse(path, w.3, format!("route `{id}` offsets decrease")));
            }
        }
        table.insert(
            id,
            Route {
                stops: stops.iter().map(|r| r.1.clone()).collect(),
                offsets: stops.iter().map(|r| r.2).collect(),
            },
        );
    }
    Ok(table)
}

pub fn write_routes(routes: &RouteTable, path: &Path) -> Result<()> {
    let mut out = create(path)?;
    let io = |e| Error::io(path, e);
    writeln!(out, "{}", ROUTES_HEADER.join(",")).map_err(io)?;
    for (id, r) in routes {
        for (i, (s, o)) in r.stops.iter().zip(&r.offsets).enumerate() {
            writeln!(out, "{id},{i},{s},{o}").map_err(io)?;
        }
    }
    finish(path, out)
}
