//! Parameter-grid expansion, parallel scenario execution and best-plan
//! selection.

mod backend;

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use backend::{scenario_inputs, Backend, ExternalBackend, ToyBackend};

use crate::signal::{barrier_of, ring_of, validate_plan, PhaseSpec, RingBarrierPlan, Violation};
use crate::simkit::{Aggregates, ArrivalProcess, Demand, RunResult, SimError, SpeedFactorModel, ToyParams};

#[derive(Debug, Error)]
pub enum OrchestrateError {
    #[error("axis {0:?} is empty")]
    EmptyAxis(&'static str),
    #[error("invalid grid: {0}")]
    BadGrid(String),
    #[error("scenario id collision between {0} and {1}")]
    IdCollision(String, String),
    #[error("backend unavailable: {0}")]
    BackendUnavailable(String),
    #[error("worker count must be at least 1")]
    Workers,
    #[error("unknown metric {0:?}")]
    UnknownMetric(String),
    #[error("no successful scenario reports metric {0:?}")]
    NoOkRows(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> OrchestrateError + '_ {
    move |source| OrchestrateError::Io { path: path.to_path_buf(), source }
}

/// Green times for phases 1..8, given directly or as relative weights that
/// are scaled to each candidate cycle length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SplitScheme {
    Explicit(Vec<f64>),
    Weights { weights: Vec<f64> },
}

impl SplitScheme {
    /// Splits for `cycle`. Weighted schemes give each barrier a share of the
    /// green time proportional to the mean of its two rings' weights; inside
    /// a barrier each ring divides what is left after clearances by weight.
    pub fn resolve(&self, phases: &[PhaseSpec], cycle: f64) -> Result<Vec<f64>, String> {
        let weights = match self {
            SplitScheme::Explicit(s) if s.len() == 8 => return Ok(s.clone()),
            SplitScheme::Explicit(s) => return Err(format!("expected 8 splits, got {}", s.len())),
            SplitScheme::Weights { weights } if weights.len() == 8 => weights,
            SplitScheme::Weights { weights } => return Err(format!("expected 8 weights, got {}", weights.len())),
        };
        if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err("weights must be finite and non-negative".into());
        }
        let clearance = |p: u8| phases.iter().find(|s| s.phase == p).map_or(0.0, PhaseSpec::clearance);
        // [barrier][ring] sums
        let mut w = [[0.0; 2]; 2];
        let mut clr = [[0.0; 2]; 2];
        for p in 1..=8u8 {
            let (b, r) = (barrier_of(p), ring_of(p) - 1);
            w[b][r] += weights[usize::from(p - 1)];
            clr[b][r] += clearance(p);
        }
        let share = [(w[0][0] + w[0][1]) / 2.0, (w[1][0] + w[1][1]) / 2.0];
        let total = share[0] + share[1];
        if w.iter().flatten().any(|&x| x <= 0.0) {
            return Err("every ring needs positive weight on both sides of the barrier".into());
        }
        let fixed = [clr[0][0].max(clr[0][1]), clr[1][0].max(clr[1][1])];
        let free = cycle - fixed[0] - fixed[1];
        if free <= 0.0 {
            return Err(format!("cycle {cycle} leaves no green time after clearances"));
        }
        let mut splits = vec![0.0; 8];
        for p in 1..=8u8 {
            let (b, r) = (barrier_of(p), ring_of(p) - 1);
            let barrier_len = fixed[b] + free * share[b] / total;
            let green = barrier_len - clr[b][r];
            splits[usize::from(p - 1)] = green * weights[usize::from(p - 1)] / w[b][r];
        }
        Ok(splits)
    }
}

fn one_f64() -> Vec<f64> {
    vec![1.0]
}
fn zero_f64() -> Vec<f64> {
    vec![0.0]
}
fn zero_u64() -> Vec<u64> {
    vec![0]
}
fn default_speed() -> Vec<SpeedFactorModel> {
    vec![SpeedFactorModel::default()]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Axes {
    pub cycle_length: Vec<f64>,
    pub splits: Vec<SplitScheme>,
    #[serde(default = "one_f64")]
    pub demand_scale: Vec<f64>,
    #[serde(default = "default_speed")]
    pub speed_factor: Vec<SpeedFactorModel>,
    /// Offset between consecutive intersections; intersection `k` (in
    /// network order) starts its cycle at `k * offset`.
    #[serde(default = "zero_f64")]
    pub offset: Vec<f64>,
    #[serde(default = "zero_u64")]
    pub seed: Vec<u64>,
}

fn default_phases() -> Vec<PhaseSpec> {
    (1..=8).map(|p| PhaseSpec::new(p, 8.0, 60.0)).collect()
}

fn default_horizon() -> (f64, f64) {
    (0.0, 3600.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParameterGrid {
    /// Phase bounds and clearances shared by every scenario.
    #[serde(default = "default_phases")]
    pub phases: Vec<PhaseSpec>,
    pub demand: Demand,
    #[serde(default)]
    pub arrivals: ArrivalProcess,
    #[serde(default = "default_horizon")]
    pub horizon: (f64, f64),
    #[serde(default)]
    pub toy: ToyParams,
    pub axes: Axes,
}

impl ParameterGrid {
    pub fn combination_count(&self) -> usize {
        let a = &self.axes;
        a.cycle_length.len() * a.splits.len() * a.demand_scale.len() * a.speed_factor.len() * a.offset.len() * a.seed.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub scenario_id: String,
    pub axis_values: BTreeMap<String, Value>,
    pub plan: RingBarrierPlan,
    pub offset: f64,
    pub demand: Demand,
    pub speed_factor: SpeedFactorModel,
    pub arrivals: ArrivalProcess,
    pub horizon: (f64, f64),
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExcludedScenario {
    pub axis_values: BTreeMap<String, Value>,
    pub reason: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub violations: Vec<Violation>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Expansion {
    pub scenarios: Vec<ScenarioSpec>,
    pub excluded: Vec<ExcludedScenario>,
}

/// First 16 hex digits of the SHA-256 of the canonical JSON of the axis
/// values (keys sorted).
pub fn scenario_id(axis_values: &BTreeMap<String, Value>) -> String {
    let canonical = serde_json::to_string(axis_values).expect("axis values serialize");
    let digest = Sha256::digest(canonical.as_bytes());
    digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
}

fn to_values<T: Serialize>(xs: &[T]) -> Vec<Value> {
    xs.iter().map(|x| serde_json::to_value(x).expect("axis value serializes")).collect()
}

/// Full Cartesian product of the axes, sorted axis names outermost first and
/// values in listed order. Combinations whose plan fails validation are
/// moved to `excluded` together with the violations.
pub fn expand_grid(grid: &ParameterGrid) -> Result<Expansion, OrchestrateError> {
    let a = &grid.axes;
    let axes: Vec<(&'static str, Vec<Value>)> = vec![
        ("cycle_length", to_values(&a.cycle_length)),
        ("demand_scale", to_values(&a.demand_scale)),
        ("offset", to_values(&a.offset)),
        ("seed", to_values(&a.seed)),
        ("speed_factor", to_values(&a.speed_factor)),
        ("splits", to_values(&a.splits)),
    ];
    for (name, vals) in &axes {
        if vals.is_empty() {
            return Err(OrchestrateError::EmptyAxis(name));
        }
    }
    let (start, end) = grid.horizon;
    if !(start < end) {
        return Err(OrchestrateError::BadGrid(format!("horizon {start}..{end} is empty")));
    }
    if a.demand_scale.iter().any(|s| !(*s >= 0.0) || !s.is_finite()) {
        return Err(OrchestrateError::BadGrid("demand scales must be finite and non-negative".into()));
    }
    grid.demand.route_counts().map_err(|e| OrchestrateError::BadGrid(e.to_string()))?;

    let mut out = Expansion { scenarios: Vec::new(), excluded: Vec::new() };
    let mut ids: BTreeMap<String, BTreeMap<String, Value>> = BTreeMap::new();
    let total = grid.combination_count();
    for flat in 0..total {
        // mixed-radix decode, last axis varying fastest
        let mut rem = flat;
        let mut idx = [0usize; 6];
        for (slot, (_, vals)) in axes.iter().enumerate().rev() {
            idx[slot] = rem % vals.len();
            rem /= vals.len();
        }
        let axis_values: BTreeMap<String, Value> =
            axes.iter().zip(idx).map(|((name, vals), i)| (name.to_string(), vals[i].clone())).collect();
        let cycle = a.cycle_length[idx[0]];
        let exclude = |reason: String, violations: Vec<Violation>| ExcludedScenario {
            axis_values: axis_values.clone(),
            reason,
            violations,
        };
        let splits = match a.splits[idx[5]].resolve(&grid.phases, cycle) {
            Ok(s) => s,
            Err(reason) => {
                out.excluded.push(exclude(reason, Vec::new()));
                continue;
            }
        };
        let plan = RingBarrierPlan::new(grid.phases.clone(), splits, cycle);
        if let Err(violations) = validate_plan(&plan) {
            out.excluded.push(exclude("plan fails validation".into(), violations));
            continue;
        }
        let id = scenario_id(&axis_values);
        if let Some(prev) = ids.insert(id.clone(), axis_values.clone()) {
            if prev != axis_values {
                return Err(OrchestrateError::IdCollision(id, serde_json::to_string(&prev).unwrap_or_default()));
            }
            return Err(OrchestrateError::BadGrid(format!("duplicate axis values {}", serde_json::to_string(&prev).unwrap_or_default())));
        }
        out.scenarios.push(ScenarioSpec {
            scenario_id: id,
            axis_values,
            plan,
            offset: a.offset[idx[2]],
            demand: grid.demand.scaled(a.demand_scale[idx[1]]),
            speed_factor: a.speed_factor[idx[4]],
            arrivals: grid.arrivals,
            horizon: grid.horizon,
            seed: a.seed[idx[3]],
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RowStatus {
    Ok,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub scenario_id: String,
    pub axis_values: BTreeMap<String, Value>,
    pub status: RowStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aggregates: Option<Aggregates>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    /// Sorted by scenario id.
    pub rows: Vec<SweepRow>,
    /// Best scenario id per registered metric, for metrics some ok row reports.
    pub best: BTreeMap<String, String>,
    /// Scenarios actually executed in this invocation (the rest were resumed).
    #[serde(skip)]
    pub executed: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    MeanCorridorTravelTime,
    MeanTravelTime,
    P95TravelTime,
    MeanDelay,
    Throughput,
}

impl Metric {
    pub const ALL: [Metric; 5] =
        [Metric::MeanCorridorTravelTime, Metric::MeanTravelTime, Metric::P95TravelTime, Metric::MeanDelay, Metric::Throughput];

    pub fn name(self) -> &'static str {
        match self {
            Metric::MeanCorridorTravelTime => "mean_corridor_travel_time",
            Metric::MeanTravelTime => "mean_travel_time",
            Metric::P95TravelTime => "p95_travel_time",
            Metric::MeanDelay => "mean_delay",
            Metric::Throughput => "throughput",
        }
    }

    pub fn parse(name: &str) -> Result<Metric, OrchestrateError> {
        Metric::ALL.into_iter().find(|m| m.name() == name).ok_or_else(|| OrchestrateError::UnknownMetric(name.into()))
    }

    /// Throughput is better when larger; every other metric when smaller.
    pub fn maximize(self) -> bool {
        matches!(self, Metric::Throughput)
    }

    pub fn value(self, a: &Aggregates) -> Option<f64> {
        match self {
            Metric::MeanCorridorTravelTime => a.mean_corridor_travel_time,
            Metric::MeanTravelTime => a.mean_travel_time,
            Metric::P95TravelTime => a.p95_travel_time,
            Metric::MeanDelay => a.mean_delay,
            Metric::Throughput => Some(a.throughput as f64),
        }
    }
}

/// Best ok row under `metric`; ties go to the smaller scenario id, so row
/// order does not matter.
pub fn select_best(result: &SweepResult, metric: Metric) -> Result<&SweepRow, OrchestrateError> {
    let mut best: Option<(&SweepRow, f64)> = None;
    for row in &result.rows {
        if row.status != RowStatus::Ok {
            continue;
        }
        let Some(v) = row.aggregates.as_ref().and_then(|a| metric.value(a)).filter(|v| v.is_finite()) else {
            continue;
        };
        let better = match best {
            None => true,
            Some((b, bv)) => {
                let (x, y) = if metric.maximize() { (bv, v) } else { (v, bv) };
                x < y || (x == y && row.scenario_id < b.scenario_id)
            }
        };
        if better {
            best = Some((row, v));
        }
    }
    best.map(|(r, _)| r).ok_or_else(|| OrchestrateError::NoOkRows(metric.name().into()))
}

fn best_per_metric(rows: &[SweepRow]) -> BTreeMap<String, String> {
    let tmp = SweepResult { rows: rows.to_vec(), best: BTreeMap::new(), executed: 0 };
    Metric::ALL
        .into_iter()
        .filter_map(|m| select_best(&tmp, m).ok().map(|r| (m.name().to_string(), r.scenario_id.clone())))
        .collect()
}

fn panic_message(p: Box<dyn std::any::Any + Send>) -> String {
    p.downcast_ref::<&str>()
        .map(|s| s.to_string())
        .or_else(|| p.downcast_ref::<String>().cloned())
        .unwrap_or_else(|| "panic".into())
}

/// Where and how a sweep persists its outputs.
#[derive(Debug, Clone, Default)]
pub struct SweepOutput {
    /// Root directory; per-scenario outputs go to `results/{scenario_id}/`.
    pub dir: Option<PathBuf>,
    /// Reuse ok results already on disk instead of re-running.
    pub resume: bool,
}

fn result_path(dir: &Path, id: &str) -> PathBuf {
    dir.join("results").join(id).join("result.json")
}

fn load_previous(dir: &Path, id: &str) -> Option<RunResult> {
    let text = fs::read_to_string(result_path(dir, id)).ok()?;
    let r: RunResult = serde_json::from_str(&text).ok()?;
    (r.scenario_id == id).then_some(r)
}

/// Runs every scenario on a pool of `workers` threads pulling from a shared
/// queue. Rows are keyed by scenario id and sorted, so the result does not
/// depend on the worker count or completion order. A scenario that errors or
/// panics becomes a failed row.
pub fn run_parallel(
    scenarios: &[ScenarioSpec],
    network: &crate::simkit::Network,
    workers: usize,
    backend: &dyn Backend,
    output: &SweepOutput,
) -> Result<SweepResult, OrchestrateError> {
    if workers == 0 {
        return Err(OrchestrateError::Workers);
    }
    backend.check_available().map_err(OrchestrateError::BackendUnavailable)?;
    let mut seen = BTreeSet::new();
    for s in scenarios {
        if !seen.insert(s.scenario_id.as_str()) {
            return Err(OrchestrateError::IdCollision(s.scenario_id.clone(), s.scenario_id.clone()));
        }
    }

    let mut done: BTreeMap<String, Result<RunResult, String>> = BTreeMap::new();
    let mut pending: Vec<&ScenarioSpec> = Vec::new();
    for s in scenarios {
        match output.dir.as_deref().filter(|_| output.resume).and_then(|d| load_previous(d, &s.scenario_id)) {
            Some(r) => {
                done.insert(s.scenario_id.clone(), Ok(r));
            }
            None => pending.push(s),
        }
    }
    let executed = pending.len();

    let next = AtomicUsize::new(0);
    let (tx, rx) = mpsc::channel::<(String, Result<RunResult, String>)>();
    std::thread::scope(|scope| {
        for _ in 0..workers.min(pending.len()) {
            let tx = tx.clone();
            let (next, pending) = (&next, &pending);
            scope.spawn(move || loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(s) = pending.get(i) else { break };
                let workdir = output.dir.as_ref().map(|d| d.join("results").join(&s.scenario_id));
                let outcome = catch_unwind(AssertUnwindSafe(|| backend.run(s, network, workdir.as_deref())))
                    .map_err(panic_message)
                    .and_then(|r| r.map_err(|e: SimError| e.to_string()));
                if tx.send((s.scenario_id.clone(), outcome)).is_err() {
                    break;
                }
            });
        }
    });
    drop(tx);
    for (id, outcome) in rx {
        done.insert(id, outcome);
    }

    let mut rows = Vec::with_capacity(scenarios.len());
    for s in scenarios {
        let outcome = done.remove(&s.scenario_id).unwrap_or_else(|| Err("scenario did not run".into()));
        if let Some(dir) = &output.dir {
            let sdir = dir.join("results").join(&s.scenario_id);
            fs::create_dir_all(&sdir).map_err(io_err(&sdir))?;
            match &outcome {
                Ok(r) => {
                    let p = sdir.join("result.json");
                    fs::write(&p, serde_json::to_vec_pretty(r).expect("result serializes")).map_err(io_err(&p))?;
                    let _ = fs::remove_file(sdir.join("error.txt"));
                }
                Err(e) => {
                    let p = sdir.join("error.txt");
                    fs::write(&p, e).map_err(io_err(&p))?;
                }
            }
        }
        rows.push(match outcome {
            Ok(r) => SweepRow {
                scenario_id: s.scenario_id.clone(),
                axis_values: s.axis_values.clone(),
                status: RowStatus::Ok,
                aggregates: Some(r.aggregates),
                error: None,
            },
            Err(e) => SweepRow {
                scenario_id: s.scenario_id.clone(),
                axis_values: s.axis_values.clone(),
                status: RowStatus::Failed,
                aggregates: None,
                error: Some(e),
            },
        });
    }
    rows.sort_by(|a, b| a.scenario_id.cmp(&b.scenario_id));
    let best = best_per_metric(&rows);
    Ok(SweepResult { rows, best, executed })
}

#[derive(Serialize)]
struct ManifestEntry<'a> {
    scenario_id: &'a str,
    axis_values: &'a BTreeMap<String, Value>,
    status: RowStatus,
}

/// Writes `manifest.json` (grid, scenarios with status, exclusions, best
/// per metric) and `results.csv` (one row per scenario: axis columns as
/// compact JSON, status, metrics).
pub fn write_sweep_outputs(
    dir: &Path,
    grid: &ParameterGrid,
    expansion: &Expansion,
    result: &SweepResult,
) -> Result<(), OrchestrateError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let manifest = serde_json::json!({
        "grid": grid,
        "scenarios": result.rows.iter().map(|r| ManifestEntry {
            scenario_id: &r.scenario_id,
            axis_values: &r.axis_values,
            status: r.status,
        }).collect::<Vec<_>>(),
        "excluded": expansion.excluded,
        "best": result.best,
    });
    let p = dir.join("manifest.json");
    fs::write(&p, serde_json::to_vec_pretty(&manifest).expect("manifest serializes")).map_err(io_err(&p))?;

    let p = dir.join("results.csv");
    let mut w = csv::Writer::from_path(&p)?;
    let axis_names: Vec<String> = result.rows.first().map(|r| r.axis_values.keys().cloned().collect()).unwrap_or_default();
    let mut header = vec!["scenario_id".to_string()];
    header.extend(axis_names.iter().cloned());
    header.push("status".into());
    header.extend(["injected", "throughput", "incomplete"].map(String::from));
    header.extend(Metric::ALL.iter().filter(|m| **m != Metric::Throughput).map(|m| m.name().to_string()));
    w.write_record(&header)?;
    let num = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for r in &result.rows {
        let mut rec = vec![r.scenario_id.clone()];
        rec.extend(axis_names.iter().map(|k| r.axis_values.get(k).map(|v| v.to_string()).unwrap_or_default()));
        rec.push(match r.status {
            RowStatus::Ok => "ok".into(),
            RowStatus::Failed => "failed".into(),
        });
        match &r.aggregates {
            Some(a) => {
                rec.extend([a.injected, a.throughput, a.incomplete].map(|x| x.to_string()));
                rec.extend(Metric::ALL.iter().filter(|m| **m != Metric::Throughput).map(|m| num(m.value(a))));
            }
            None => rec.extend(std::iter::repeat_n(String::new(), 3 + Metric::ALL.len() - 1)),
        }
        w.write_record(&rec)?;
    }
    w.flush().map_err(io_err(&p))?;
    Ok(())
}
