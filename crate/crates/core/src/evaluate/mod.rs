//! Scoring estimates against ground truth, and the data used to do so.

mod chain;
mod synthetic;

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use crate::aggregate::aggregate_od;
use crate::error::{Error, Result};
use crate::ingest::{create, finish};
use crate::model::{OdMatrix, TransferAssignment, TripSegment, ZoneMap};
use crate::odmatrix::assemble_od_integral;

pub use chain::{
    parse_routes, parse_transactions, trip_chain, write_routes, write_transactions, ChainParams,
    ChainResult, Route, RouteTable, Transaction,
};
pub use synthetic::{generate_synthetic, SyntheticConfig, SyntheticInstance};

/// Coefficient of determination of `estimate` against `truth`.
///
/// Both matrices are laid over the union of their zone ids with missing
/// entries as zero, and every ordered pair of zones counts, including the
/// diagonal and empty cells.
pub fn r_squared(truth: &OdMatrix, estimate: &OdMatrix) -> Result<f64> {
    let mut ids: BTreeMap<&str, usize> = BTreeMap::new();
    for z in truth.zone_map.zones().iter().chain(estimate.zone_map.zones()) {
        let next = ids.len();
        ids.entry(z.as_str()).or_insert(next);
    }
    let n = ids.len();
    let place = |od: &OdMatrix| {
        let zones = od.zone_map.zones();
        let mut dense = vec![0.0; n * n];
        for (&(o, d), &v) in &od.flow {
            dense[ids[zones[o].as_str()] * n + ids[zones[d].as_str()]] += v;
        }
        dense
    };
    let t = place(truth);
    let e = place(estimate);
    if t.is_empty() {
        return Err(Error::ZeroVariance);
    }
    let mean = t.iter().sum::<f64>() / t.len() as f64;
    let sst: f64 = t.iter().map(|&v| (v - mean).powi(2)).sum();
    if sst == 0.0 {
        return Err(Error::ZeroVariance);
    }
    let sse: f64 = t.iter().zip(&e).map(|(&a, &b)| (a - b).powi(2)).sum();
    Ok(1.0 - sse / sst)
}

/// A named zone system to score at.
#[derive(Debug, Clone, PartialEq)]
pub struct Resolution {
    pub label: String,
    /// Cut height that produced the map, when it came from clustering.
    pub cut_height_m: Option<f64>,
    pub zone_map: ZoneMap,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalRow {
    pub label: String,
    pub cut_height_m: Option<f64>,
    pub r_squared: f64,
    pub total_truth: f64,
    pub total_estimate: f64,
}

/// Scores a stop-level estimate against the truth at each resolution.
///
/// The truth matrix is assembled over the estimate's own zone map, then both
/// are aggregated onto every resolution.
pub fn evaluate_run(
    truth_segments: &[TripSegment],
    truth: &TransferAssignment,
    estimate: &OdMatrix,
    resolutions: &[Resolution],
) -> Result<Vec<EvalRow>> {
    let truth_od = assemble_od_integral(truth_segments, truth, &estimate.zone_map)?;
    resolutions
        .iter()
        .map(|res| {
            let t = aggregate_od(&truth_od, &res.zone_map)?;
            let e = aggregate_od(estimate, &res.zone_map)?;
            Ok(EvalRow {
                label: res.label.clone(),
                cut_height_m: res.cut_height_m,
                r_squared: r_squared(&t, &e)?,
                total_truth: t.total(),
                total_estimate: e.total(),
            })
        })
        .collect()
}

pub const REPORT_HEADER: [&str; 7] = [
    "resolution_label",
    "cut_height_m",
    "r_squared",
    "total_truth",
    "total_estimate",
    "method",
    "solver_objective",
];

/// Writes the evaluation table; every row also carries the solver method and
/// its objective value. A missing cut height is left empty.
pub fn write_report(rows: &[EvalRow], method: &str, objective: f64, path: &Path) -> Result<()> {
    let mut out = create(path)?;
    let io = |e| Error::io(path, e);
    writeln!(out, "{}", REPORT_HEADER.join(",")).map_err(io)?;
    for r in rows {
        let cut = r.cut_height_m.map(|c| c.to_string()).unwrap_or_default();
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.label, cut, r.r_squared, r.total_truth, r.total_estimate, method, objective
        )
        .map_err(io)?;
    }
    finish(path, out)
}
