//! Batch pipeline driven by a TOML configuration.
//!
//! Each stage reads its inputs from the configured files or from the output
//! directory and writes its artifacts back there, so running the stages one
//! at a time produces the same files as [`run_pipeline`].
//!
//! | stage     | reads                                   | writes |
//! |-----------|-----------------------------------------|--------|
//! | generate  | `[synthetic]`                           | `stops.csv`, `routes.csv`, `transactions.csv`, `rates.csv` |
//! | chain     | stops, routes, transactions             | `segments.csv`, `truth.csv` |
//! | solve     | stops, segments, rates                  | `od_stop.csv`, `run_log` |
//! | aggregate | stops, `od_stop.csv`, zone maps         | `od_<label>.csv` |
//! | evaluate  | segments, `truth.csv`, `od_*.csv`, `run_log` | `report.csv` |

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::aggregate::{aggregate_od, cut_height_for_radius, hca_clusters};
use crate::error::{Error, Result};
use crate::evaluate::{
    evaluate_run, generate_synthetic, parse_routes, parse_transactions, trip_chain, write_report,
    write_routes, write_transactions, ChainParams, Resolution, SyntheticConfig,
};
use crate::feasibility::{build_feasibility, observed_transfer_targets};
use crate::ingest::{
    create, finish, open_csv, parse_rates, parse_segments, parse_stops, parse_zones, records,
    write_rates, write_segments, write_stops,
};
use crate::model::{
    validate_instance, FeasibilityParams, StopRegistry, TransferAssignment, TripSegment, ZoneMap,
};
use crate::odmatrix::{assemble_od_fractional, assemble_od_integral, parse_od_csv, write_od_csv};
use crate::solver::{
    round_relaxation, solve_brute, solve_ip, solve_qcp_with, Method, Objective, QcpOptions,
    SolverReport,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    /// Overrides `synthetic.seed` when set.
    pub seed: Option<u64>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    pub input: Option<InputConfig>,
    pub synthetic: Option<SyntheticConfig>,
    #[serde(default)]
    pub feasibility: FeasibilityConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub evaluation: EvaluationConfig,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputConfig {
    pub stops: PathBuf,
    pub rates: PathBuf,
    /// Segments to solve when there are no transactions to chain.
    pub segments: Option<PathBuf>,
    pub transactions: Option<PathBuf>,
    pub routes: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeasibilityConfig {
    pub max_walk_m: f64,
    pub max_transfer_min: f64,
}

impl Default for FeasibilityConfig {
    fn default() -> Self {
        FeasibilityConfig {
            max_walk_m: 402.0,
            max_transfer_min: 30.0,
        }
    }
}

impl FeasibilityConfig {
    pub fn params(&self) -> FeasibilityParams {
        FeasibilityParams {
            max_walk_m: self.max_walk_m,
            max_transfer_s: (self.max_transfer_min * 60.0).round() as i64,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverMethod {
    Ip,
    Qcp,
    #[serde(alias = "brute")]
    BruteL1,
    BruteL2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub method: SolverMethod,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            method: SolverMethod::Ip,
            tol: 1e-6,
            max_iter: 100_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ZoneFile {
    pub label: String,
    pub path: PathBuf,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluationConfig {
    pub tac_cut_heights: Vec<f64>,
    /// Cluster radii; each becomes a cut height of twice the radius.
    pub tac_radii: Vec<f64>,
    pub zone_maps: Vec<ZoneFile>,
}

impl Config {
    /// Parses TOML, naming the offending key path on schema errors.
    pub fn from_toml(text: &str) -> Result<Config> {
        let de = toml::Deserializer::new(text);
        let cfg: Config = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner();
            let msg = inner.message().trim().to_string();
            if path == "." || path.is_empty() {
                Error::Config(msg)
            } else {
                Error::Config(format!("{path}: {msg}"))
            }
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file; relative paths inside it are taken relative to
    /// the file's directory.
    pub fn load(path: &Path) -> Result<Config> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Config::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.rebase(base);
        Ok(cfg)
    }

    fn rebase(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.output_dir);
        if let Some(input) = &mut self.input {
            fix(&mut input.stops);
            fix(&mut input.rates);
            for p in [&mut input.segments, &mut input.transactions, &mut input.routes]
                .into_iter()
                .flatten()
            {
                fix(p);
            }
        }
        for z in &mut self.evaluation.zone_maps {
            fix(&mut z.path);
        }
    }

    /// Checks cross-field constraints; [`Config::from_toml`] already runs it.
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        match (&self.input, &self.synthetic) {
            (Some(_), Some(_)) | (None, None) => {
                return fail("exactly one of `input` and `synthetic` is required".into())
            }
            (Some(i), None) => {
                if i.segments.is_none() && (i.transactions.is_none() || i.routes.is_none()) {
                    return fail(
                        "input: give `segments`, or `transactions` together with `routes`".into(),
                    );
                }
            }
            (None, Some(_)) => {}
        }
        let f = &self.feasibility;
        if !(f.max_walk_m > 0.0) || !(f.max_transfer_min > 0.0) {
            return fail("feasibility: thresholds must be positive".into());
        }
        if !(self.solver.tol > 0.0) || self.solver.max_iter == 0 {
            return fail("solver: tol and max_iter must be positive".into());
        }
        let e = &self.evaluation;
        if let Some(c) = e.tac_cut_heights.iter().chain(&e.tac_radii).find(|c| !(**c >= 0.0)) {
            return fail(format!("evaluation: cut heights and radii must be >= 0, got {c}"));
        }
        let mut labels: Vec<String> = self.resolution_specs().into_iter().map(|r| r.0).collect();
        labels.push("stop".into());
        labels.sort();
        if let Some(w) = labels.windows(2).find(|w| w[0] == w[1]) {
            return fail(format!("evaluation: duplicate resolution label `{}`", w[0]));
        }
        Ok(())
    }

    fn resolution_specs(&self) -> Vec<(String, ResolutionSource)> {
        let e = &self.evaluation;
        let mut out = Vec::new();
        for &c in &e.tac_cut_heights {
            out.push((format!("tac_{c}"), ResolutionSource::Cut(c)));
        }
        for &r in &e.tac_radii {
            out.push((format!("tac_r{r}"), ResolutionSource::Cut(cut_height_for_radius(r))));
        }
        for z in &e.zone_maps {
            out.push((z.label.clone(), ResolutionSource::File(z.path.clone())));
        }
        out
    }

    fn synthetic_config(&self) -> Option<SyntheticConfig> {
        self.synthetic.clone().map(|mut s| {
            if let Some(seed) = self.seed {
                s.seed = seed;
            }
            s
        })
    }

    fn out(&self, name: &str) -> PathBuf {
        self.output_dir.join(name)
    }

    fn stops_path(&self) -> PathBuf {
        match &self.input {
            Some(i) => i.stops.clone(),
            None => self.out("stops.csv"),
        }
    }

    fn rates_path(&self) -> PathBuf {
        match &self.input {
            Some(i) => i.rates.clone(),
            None => self.out("rates.csv"),
        }
    }

    /// Transactions and routes to chain, if there are any.
    fn chain_inputs(&self) -> Option<(PathBuf, PathBuf)> {
        match &self.input {
            Some(i) => i.transactions.clone().zip(i.routes.clone()),
            None => Some((self.out("transactions.csv"), self.out("routes.csv"))),
        }
    }

    fn segments_path(&self) -> PathBuf {
        match (&self.input, self.chain_inputs()) {
            (_, Some(_)) => self.out("segments.csv"),
            (Some(i), None) => i.segments.clone().expect("checked"),
            (None, None) => unreachable!("synthetic runs always chain"),
        }
    }
}

#[derive(Debug, Clone)]
enum ResolutionSource {
    Cut(f64),
    File(PathBuf),
}

/// Process exit status for an error: 2 configuration, 3 input validation,
/// 4 solver.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) => 2,
        Error::TooLarge { .. } | Error::NotConverged { .. } => 4,
        _ => 3,
    }
}

/// Writes the synthetic instance's stops, routes, transactions and rates.
pub fn stage_generate(cfg: &Config) -> Result<()> {
    let syn = cfg
        .synthetic_config()
        .ok_or_else(|| Error::Config("generate needs a `synthetic` section".into()))?;
    let inst = generate_synthetic(&syn)?;
    write_stops(&inst.registry, &cfg.out("stops.csv"))?;
    write_routes(&inst.routes, &cfg.out("routes.csv"))?;
    write_transactions(&inst.transactions, &cfg.out("transactions.csv"))?;
    write_rates(&inst.rates, &cfg.out("rates.csv"))
}

/// Chains transactions into `segments.csv` and `truth.csv`; returns the
/// number of dropped card-days.
pub fn stage_chain(cfg: &Config) -> Result<usize> {
    let (tx_path, routes_path) = cfg
        .chain_inputs()
        .ok_or_else(|| Error::Config("chain needs `input.transactions` and `input.routes`".into()))?;
    let registry = parse_stops(&cfg.stops_path())?;
    let routes = parse_routes(&routes_path, &registry)?;
    let txs = parse_transactions(&tx_path, &registry)?;
    let params = cfg.feasibility.params();
    let res = trip_chain(
        &txs,
        &registry,
        &routes,
        &ChainParams {
            walk_m: params.max_walk_m,
            transfer_s: params.max_transfer_s,
        },
    )?;
    write_segments(&res.segments, &cfg.out("segments.csv"))?;
    write_truth(&res.segments, &res.truth, &cfg.out("truth.csv"))?;
    Ok(res.dropped_cards)
}

/// Summary of a solve, as recorded in `run_log`.
#[derive(Debug, Clone, PartialEq)]
pub struct SolveSummary {
    pub report: SolverReport,
    pub segments: usize,
    pub arcs: usize,
    pub observed_transfers: u64,
    pub transfers: f64,
}

/// Solves the configured instance and writes `od_stop.csv` and `run_log`.
pub fn stage_solve(cfg: &Config) -> Result<SolveSummary> {
    let registry = parse_stops(&cfg.stops_path())?;
    let rates = parse_rates(&cfg.rates_path(), &registry)?;
    let segments = parse_segments(&cfg.segments_path(), &registry)?;
    let violations = validate_instance(&segments, &registry, &rates);
    if !violations.is_empty() {
        let list: Vec<String> = violations.iter().map(|v| v.to_string()).collect();
        return Err(Error::Invalid(list.join("; ")));
    }
    let graph = build_feasibility(&segments, &registry, &cfg.feasibility.params());
    let targets = observed_transfer_targets(&graph.segments, &registry, &rates);
    let stop_map = ZoneMap::identity(&registry);

    let (od, report, transfers) = match cfg.solver.method {
        SolverMethod::Ip => {
            let (a, report) = solve_ip(&graph, &registry, &targets);
            let transfers = a.transfer_count() as f64;
            (assemble_od_integral(&segments, &a, &stop_map)?, report, transfers)
        }
        SolverMethod::BruteL1 | SolverMethod::BruteL2 => {
            let objective = if cfg.solver.method == SolverMethod::BruteL1 {
                Objective::L1
            } else {
                Objective::L2
            };
            let (a, report) = solve_brute(&graph, &registry, &rates, &targets, objective)?;
            let transfers = a.transfer_count() as f64;
            (assemble_od_integral(&segments, &a, &stop_map)?, report, transfers)
        }
        SolverMethod::Qcp => {
            let started = std::time::Instant::now();
            let opts = QcpOptions {
                tol: cfg.solver.tol,
                max_iter: cfg.solver.max_iter,
                ..QcpOptions::default()
            };
            let frac = solve_qcp_with(&graph, &registry, &rates, &opts)?;
            let rounded = round_relaxation(&frac, &graph, &targets);
            let report = SolverReport {
                method: Method::QcpRounded,
                objective: frac.objective,
                wall_time: started.elapsed().as_secs_f64(),
                iterations: frac.iterations as u64,
            };
            let transfers = rounded.probs.len() as f64;
            (assemble_od_fractional(&segments, &rounded, &stop_map)?, report, transfers)
        }
    };
    write_od_csv(&od, &cfg.out("od_stop.csv"))?;
    let summary = SolveSummary {
        report,
        segments: graph.len(),
        arcs: graph.arc_count(),
        observed_transfers: targets.n,
        transfers,
    };
    write_run_log(&summary, &cfg.out("run_log"))?;
    Ok(summary)
}

fn write_run_log(s: &SolveSummary, path: &Path) -> Result<()> {
    let mut out = create(path)?;
    write!(
        out,
        "{}segments = {}\narcs = {}\nobserved_transfers = {}\ntransfers = {}\n",
        s.report.to_kv(),
        s.segments,
        s.arcs,
        s.observed_transfers,
        s.transfers
    )
    .map_err(|e| Error::io(path, e))?;
    finish(path, out)
}

/// `key = value` pairs of a run log.
pub fn read_run_log(path: &Path) -> Result<BTreeMap<String, String>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text
        .lines()
        .filter_map(|l| l.split_once(" = "))
        .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
        .collect())
}

fn resolutions(cfg: &Config, registry: &StopRegistry) -> Result<Vec<Resolution>> {
    cfg.resolution_specs()
        .into_iter()
        .map(|(label, src)| {
            let (zone_map, cut_height_m) = match src {
                ResolutionSource::Cut(c) => (hca_clusters(registry, c), Some(c)),
                ResolutionSource::File(p) => (parse_zones(&p, registry)?, None),
            };
            Ok(Resolution {
                label,
                cut_height_m,
                zone_map,
            })
        })
        .collect()
}

/// Aggregates `od_stop.csv` onto every configured resolution.
pub fn stage_aggregate(cfg: &Config) -> Result<()> {
    let registry = parse_stops(&cfg.stops_path())?;
    let od = parse_od_csv(&cfg.out("od_stop.csv"), &ZoneMap::identity(&registry))?;
    for res in resolutions(cfg, &registry)? {
        let agg = aggregate_od(&od, &res.zone_map)?;
        write_od_csv(&agg, &cfg.out(&format!("od_{}.csv", res.label)))?;
    }
    Ok(())
}

/// Scores `od_stop.csv` against the chained truth at stop level and every
/// configured resolution.
pub fn stage_evaluate(cfg: &Config) -> Result<()> {
    if cfg.chain_inputs().is_none() {
        return Err(Error::Config(
            "evaluate needs ground truth: give `input.transactions` and `input.routes`".into(),
        ));
    }
    let registry = parse_stops(&cfg.stops_path())?;
    let segments = parse_segments(&cfg.out("segments.csv"), &registry)?;
    let truth = parse_truth(&cfg.out("truth.csv"), &segments)?;
    let stop_map = ZoneMap::identity(&registry);
    let od = parse_od_csv(&cfg.out("od_stop.csv"), &stop_map)?;
    let mut all = vec![Resolution {
        label: "stop".into(),
        cut_height_m: Some(0.0),
        zone_map: stop_map,
    }];
    all.extend(resolutions(cfg, &registry)?);
    let rows = evaluate_run(&segments, &truth, &od, &all)?;
    let log = read_run_log(&cfg.out("run_log"))?;
    let method = log.get("method").cloned().unwrap_or_default();
    let objective: f64 = log
        .get("objective")
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| Error::input(cfg.out("run_log"), "missing objective"))?;
    write_report(&rows, &method, objective, &cfg.out("report.csv"))
}

/// Outcome of a full run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub solve: SolveSummary,
    pub dropped_cards: Option<usize>,
    pub evaluated: bool,
}

/// Runs every applicable stage in order.
pub fn run_pipeline(cfg: &Config) -> Result<RunSummary> {
    if cfg.synthetic.is_some() {
        stage_generate(cfg)?;
    }
    let dropped_cards = match cfg.chain_inputs() {
        Some(_) => Some(stage_chain(cfg)?),
        None => None,
    };
    let solve = stage_solve(cfg)?;
    stage_aggregate(cfg)?;
    let evaluated = dropped_cards.is_some();
    if evaluated {
        stage_evaluate(cfg)?;
    }
    Ok(RunSummary {
        solve,
        dropped_cards,
        evaluated,
    })
}

/// Writes transfers as `first_leg,second_leg` segment id pairs.
pub fn write_truth(segments: &[TripSegment], truth: &TransferAssignment, path: &Path) -> Result<()> {
    let mut out = create(path)?;
    let io = |e| Error::io(path, e);
    writeln!(out, "first_leg,second_leg").map_err(io)?;
    for (j, k) in truth.arcs() {
        writeln!(out, "{},{}", segments[j].segment_id, segments[k].segment_id).map_err(io)?;
    }
    finish(path, out)
}

pub fn parse_truth(path: &Path, segments: &[TripSegment]) -> Result<TransferAssignment> {
    let index: std::collections::HashMap<&str, usize> = segments
        .iter()
        .enumerate()
        .map(|(i, s)| (s.segment_id.as_str(), i))
        .collect();
    let mut reader = open_csv(path, &["first_leg", "second_leg"])?;
    let mut arcs = Vec::new();
    let mut used = vec![false; segments.len()];
    for row in records(path, &mut reader) {
        let (line, rec) = row?;
        let find = |i: usize| {
            index
                .get(&rec[i])
                .copied()
                .ok_or_else(|| Error::parse(path, line, format!("unknown segment `{}`", &rec[i])))
        };
        let (j, k) = (find(0)?, find(1)?);
        if j == k || used[j] || used[k] {
            return Err(Error::parse(path, line, "segment used in two transfers"));
        }
        used[j] = true;
        used[k] = true;
        arcs.push((j, k));
    }
    Ok(TransferAssignment::from_arcs(segments.len(), &arcs))
}
