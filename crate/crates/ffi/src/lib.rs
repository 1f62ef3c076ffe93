//! C ABI for the estimator.
//!
//! Handles are opaque: create them with the `*_load` / `*_solve_*` functions
//! and release them with the matching `*_free`. Every fallible call returns
//! an [`OdflowStatus`]; on failure the message is available from
//! [`odflow_last_error`] on the same thread until the next failing call.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use odflow::feasibility::{build_feasibility, observed_transfer_targets};
use odflow::ingest::{parse_rates, parse_segments, parse_stops};
use odflow::model::{
    validate_instance, FeasibilityGraph, FeasibilityParams, OdMatrix, StopRegistry,
    TransferRates, TransferTargets, ZoneMap,
};
use odflow::odmatrix::{assemble_od_fractional, assemble_od_integral, write_od_csv};
use odflow::pipeline::{run_pipeline, Config};
use odflow::solver::{round_relaxation, solve_ip, solve_qcp_with, QcpOptions};
use odflow::Error;

/// Result of a call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OdflowStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidString = 2,
    Config = 3,
    Input = 4,
    Solver = 5,
    Panic = 6,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn status_of(err: &Error) -> OdflowStatus {
    match err {
        Error::Config(_) => OdflowStatus::Config,
        Error::TooLarge { .. } | Error::NotConverged { .. } => OdflowStatus::Solver,
        _ => OdflowStatus::Input,
    }
}

/// Runs `f`, turning errors and panics into a status and a stored message.
fn guard(f: impl FnOnce() -> Result<(), (OdflowStatus, String)>) -> OdflowStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => OdflowStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            OdflowStatus::Panic
        }
    }
}

fn lib_err(e: Error) -> (OdflowStatus, String) {
    (status_of(&e), e.to_string())
}

unsafe fn path_arg(p: *const c_char, name: &str) -> Result<PathBuf, (OdflowStatus, String)> {
    if p.is_null() {
        return Err((OdflowStatus::NullArgument, format!("{name} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map(PathBuf::from)
        .map_err(|_| (OdflowStatus::InvalidString, format!("{name} is not UTF-8")))
}

/// A validated instance with its candidate-transfer graph.
pub struct OdflowInstance {
    registry: StopRegistry,
    rates: TransferRates,
    graph: FeasibilityGraph,
    targets: TransferTargets,
}

/// A solved instance: stop-level O-D matrix and solver statistics.
pub struct OdflowResult {
    od: OdMatrix,
    objective: f64,
    iterations: u64,
    wall_time: f64,
}

/// Message of the last failed call on this thread, or null. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn odflow_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Loads stops, segments and rates from CSV files and builds candidate
/// transfers with the given walking (metres) and waiting (seconds) limits.
///
/// # Safety
/// Path arguments must be null or valid NUL-terminated strings; `out` must
/// be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn odflow_instance_load(
    stops_csv: *const c_char,
    segments_csv: *const c_char,
    rates_csv: *const c_char,
    max_walk_m: f64,
    max_transfer_s: i64,
    out: *mut *mut OdflowInstance,
) -> OdflowStatus {
    guard(|| {
        if out.is_null() {
            return Err((OdflowStatus::NullArgument, "out is null".into()));
        }
        *out = ptr::null_mut();
        let stops = path_arg(stops_csv, "stops_csv")?;
        let segments = path_arg(segments_csv, "segments_csv")?;
        let rates = path_arg(rates_csv, "rates_csv")?;
        let registry = parse_stops(&stops).map_err(lib_err)?;
        let segments = parse_segments(&segments, &registry).map_err(lib_err)?;
        let rates = parse_rates(&rates, &registry).map_err(lib_err)?;
        let violations = validate_instance(&segments, &registry, &rates);
        if let Some(v) = violations.first() {
            return Err((OdflowStatus::Input, v.to_string()));
        }
        if !(max_walk_m > 0.0) || max_transfer_s <= 0 {
            return Err((OdflowStatus::Config, "thresholds must be positive".into()));
        }
        let params = FeasibilityParams {
            max_walk_m,
            max_transfer_s,
        };
        let graph = build_feasibility(&segments, &registry, &params);
        let targets = observed_transfer_targets(&graph.segments, &registry, &rates);
        *out = Box::into_raw(Box::new(OdflowInstance {
            registry,
            rates,
            graph,
            targets,
        }));
        Ok(())
    })
}

/// # Safety
/// `inst` must be null or a handle from [`odflow_instance_load`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn odflow_instance_free(inst: *mut OdflowInstance) {
    if !inst.is_null() {
        drop(Box::from_raw(inst));
    }
}

/// Number of segments, or 0 for a null handle.
///
/// # Safety
/// `inst` must be null or a live instance handle.
#[no_mangle]
pub unsafe extern "C" fn odflow_instance_segment_count(inst: *const OdflowInstance) -> usize {
    inst.as_ref().map_or(0, |i| i.graph.len())
}

/// Number of candidate transfers, or 0 for a null handle.
///
/// # Safety
/// `inst` must be null or a live instance handle.
#[no_mangle]
pub unsafe extern "C" fn odflow_instance_arc_count(inst: *const OdflowInstance) -> usize {
    inst.as_ref().map_or(0, |i| i.graph.arc_count())
}

/// Total observed transfers implied by the rates, or 0 for a null handle.
///
/// # Safety
/// `inst` must be null or a live instance handle.
#[no_mangle]
pub unsafe extern "C" fn odflow_instance_observed_transfers(inst: *const OdflowInstance) -> u64 {
    inst.as_ref().map_or(0, |i| i.targets.n)
}

unsafe fn solve_with(
    inst: *const OdflowInstance,
    out: *mut *mut OdflowResult,
    solve: impl FnOnce(&OdflowInstance) -> Result<OdflowResult, Error>,
) -> OdflowStatus {
    guard(|| {
        if out.is_null() {
            return Err((OdflowStatus::NullArgument, "out is null".into()));
        }
        *out = ptr::null_mut();
        let inst = inst
            .as_ref()
            .ok_or((OdflowStatus::NullArgument, "instance is null".to_string()))?;
        let res = solve(inst).map_err(lib_err)?;
        *out = Box::into_raw(Box::new(res));
        Ok(())
    })
}

/// Solves the exact L1 program.
///
/// # Safety
/// `inst` must be a live instance handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn odflow_solve_ip(
    inst: *const OdflowInstance,
    out: *mut *mut OdflowResult,
) -> OdflowStatus {
    solve_with(inst, out, |i| {
        let (a, report) = solve_ip(&i.graph, &i.registry, &i.targets);
        let od = assemble_od_integral(&i.graph.segments, &a, &ZoneMap::identity(&i.registry))?;
        Ok(OdflowResult {
            od,
            objective: report.objective,
            iterations: report.iterations,
            wall_time: report.wall_time,
        })
    })
}

/// Solves the convex relaxation to a certified gap of `tol` and rounds it.
///
/// # Safety
/// `inst` must be a live instance handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn odflow_solve_qcp(
    inst: *const OdflowInstance,
    tol: f64,
    max_iter: usize,
    out: *mut *mut OdflowResult,
) -> OdflowStatus {
    solve_with(inst, out, |i| {
        if !(tol > 0.0) || max_iter == 0 {
            return Err(Error::Config("tol and max_iter must be positive".into()));
        }
        let started = std::time::Instant::now();
        let opts = QcpOptions {
            tol,
            max_iter,
            ..QcpOptions::default()
        };
        let frac = solve_qcp_with(&i.graph, &i.registry, &i.rates, &opts)?;
        let rounded = round_relaxation(&frac, &i.graph, &i.targets);
        let od = assemble_od_fractional(&i.graph.segments, &rounded, &ZoneMap::identity(&i.registry))?;
        Ok(OdflowResult {
            od,
            objective: frac.objective,
            iterations: frac.iterations as u64,
            wall_time: started.elapsed().as_secs_f64(),
        })
    })
}

/// # Safety
/// `res` must be null or a result handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn odflow_result_free(res: *mut OdflowResult) {
    if !res.is_null() {
        drop(Box::from_raw(res));
    }
}

/// Solver objective; NaN for a null handle.
///
/// # Safety
/// `res` must be null or a live result handle.
#[no_mangle]
pub unsafe extern "C" fn odflow_result_objective(res: *const OdflowResult) -> f64 {
    res.as_ref().map_or(f64::NAN, |r| r.objective)
}

/// Branch-and-bound nodes or relaxation iterations.
///
/// # Safety
/// `res` must be null or a live result handle.
#[no_mangle]
pub unsafe extern "C" fn odflow_result_iterations(res: *const OdflowResult) -> u64 {
    res.as_ref().map_or(0, |r| r.iterations)
}

/// Solver wall time in seconds.
///
/// # Safety
/// `res` must be null or a live result handle.
#[no_mangle]
pub unsafe extern "C" fn odflow_result_wall_time(res: *const OdflowResult) -> f64 {
    res.as_ref().map_or(f64::NAN, |r| r.wall_time)
}

/// Sum of all O-D entries.
///
/// # Safety
/// `res` must be null or a live result handle.
#[no_mangle]
pub unsafe extern "C" fn odflow_result_total_trips(res: *const OdflowResult) -> f64 {
    res.as_ref().map_or(0.0, |r| r.od.total())
}

/// Number of nonzero stop pairs.
///
/// # Safety
/// `res` must be null or a live result handle.
#[no_mangle]
pub unsafe extern "C" fn odflow_result_entry_count(res: *const OdflowResult) -> usize {
    res.as_ref()
        .map_or(0, |r| r.od.flow.values().filter(|&&v| v != 0.0).count())
}

/// Flow between two stops by id; 0 for unknown ids or null arguments.
///
/// # Safety
/// `res` must be null or a live result handle; the ids must be null or valid
/// NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn odflow_result_flow(
    res: *const OdflowResult,
    origin: *const c_char,
    dest: *const c_char,
) -> f64 {
    let (Some(r), false, false) = (res.as_ref(), origin.is_null(), dest.is_null()) else {
        return 0.0;
    };
    match (CStr::from_ptr(origin).to_str(), CStr::from_ptr(dest).to_str()) {
        (Ok(o), Ok(d)) => r.od.get_by_id(o, d),
        _ => 0.0,
    }
}

/// Writes the stop-level matrix as `origin_zone,dest_zone,flow`.
///
/// # Safety
/// `res` must be a live result handle; `path` a valid NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn odflow_result_write_csv(
    res: *const OdflowResult,
    path: *const c_char,
) -> OdflowStatus {
    guard(|| {
        let r = res
            .as_ref()
            .ok_or((OdflowStatus::NullArgument, "result is null".to_string()))?;
        let path = path_arg(path, "path")?;
        write_od_csv(&r.od, &path).map_err(lib_err)
    })
}

/// Runs the whole pipeline described by a TOML configuration file.
///
/// # Safety
/// `config_path` must be a valid NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn odflow_run_config(config_path: *const c_char) -> OdflowStatus {
    guard(|| {
        let path = path_arg(config_path, "config_path")?;
        let cfg = Config::load(&path).map_err(lib_err)?;
        run_pipeline(&cfg).map(|_| ()).map_err(lib_err)
    })
}
