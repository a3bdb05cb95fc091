//! Command-line front end. Exit codes: 0 success or no flags, 2 usage or
//! input error, 3 detector flags raised, 4 simulation backend failure.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::analytics::analyze_intersection;
use crate::config::Config;
use crate::detect::{atspm_interruption, detect_trajectory_outliers, Cohort, DetectorOutput, RelativeDeviation};
use crate::geo::geojson::{read_features, RawFeatures};
use crate::ingest::{
    clip_to_masks, filter_journeys, load_atspm, load_trajectories, phase_volumes, write_rejects, Journey, JourneyStore,
    PhaseVolumes, DETECTOR_ON,
};
use crate::masks::{MaskKind, MaskSet};
use crate::orchestrate::{
    expand_grid, run_parallel, select_best, write_sweep_outputs, Backend, ExternalBackend, Metric, ParameterGrid,
    RowStatus, SweepOutput, ToyBackend,
};
use crate::simkit::{Demand, Network};
use crate::synth::{
    route_name, synth_atspm, synth_network, synth_trajectories, AtspmSynth, NetworkKind, NetworkSynth,
    TrajectorySynth,
};
use crate::window::{TimeWindow, WEEK_S};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_FLAGS: i32 = 3;
pub const EXIT_BACKEND: i32 = 4;

/// Marks an error as a simulation backend failure (exit 4).
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct BackendFailure(pub String);

#[derive(Debug, Parser)]
#[command(name = "trafficlens", version, about = "Probe-trajectory and signal-controller analytics")]
pub struct Cli {
    /// JSON configuration file; defaults to $TRAFFICLENS_CONFIG.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Log at debug level.
    #[arg(short, long, global = true)]
    pub verbose: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build corridor and intersection masks from road centerlines.
    Masks(MasksArgs),
    /// Load raw trajectories, filter, clip to masks and store fragments.
    Ingest(IngestArgs),
    /// Emit the analytics report bundle per intersection.
    Analyze(AnalyzeArgs),
    /// Run interruption detection against prior-week baselines.
    Detect(DetectArgs),
    /// Run a signal-timing parameter sweep.
    Sweep(SweepArgs),
    /// Generate synthetic inputs with ground truth.
    Synth(SynthArgs),
}

#[derive(Debug, clap::Args)]
pub struct MasksArgs {
    /// GeoJSON with road centerline LineStrings.
    #[arg(long)]
    pub roads: PathBuf,
    /// GeoJSON with intersection Points carrying an `id` property.
    #[arg(long)]
    pub intersections: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Corridor buffer half-width in meters.
    #[arg(long)]
    pub width: Option<f64>,
    /// Intersection disc radius in meters.
    #[arg(long)]
    pub radius: Option<f64>,
}

#[derive(Debug, clap::Args)]
pub struct IngestArgs {
    #[arg(long)]
    pub masks: Option<PathBuf>,
    #[arg(long)]
    pub store: Option<PathBuf>,
    /// Write unusable rows here as NDJSON.
    #[arg(long)]
    pub rejects: Option<PathBuf>,
    #[arg(long)]
    pub min_duration: Option<f64>,
    #[arg(long)]
    pub min_length: Option<f64>,
    /// Trajectory CSV or NDJSON files.
    #[arg(required = true)]
    pub files: Vec<PathBuf>,
}

#[derive(Debug, clap::Args)]
pub struct AnalyzeArgs {
    #[arg(long)]
    pub store: Option<PathBuf>,
    #[arg(long)]
    pub masks: Option<PathBuf>,
    /// Repeat to analyse several intersections in parallel.
    #[arg(long = "intersection", required = true)]
    pub intersections: Vec<String>,
    /// `start..end`, epoch seconds or RFC 3339.
    #[arg(long)]
    pub window: Option<TimeWindow>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write SVG histograms.
    #[arg(long)]
    pub svg: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Method {
    Abod,
    Atspm,
}

#[derive(Debug, clap::Args)]
pub struct DetectArgs {
    #[arg(long)]
    pub store: Option<PathBuf>,
    #[arg(long)]
    pub masks: Option<PathBuf>,
    #[arg(long = "intersection", required = true)]
    pub intersections: Vec<String>,
    #[arg(long)]
    pub window: TimeWindow,
    #[arg(long, value_enum, default_value = "abod")]
    pub method: Method,
    /// `auto` for the same hour one and two weeks earlier, or a
    /// comma-separated list of up to two windows.
    #[arg(long, default_value = "auto")]
    pub baselines: String,
    #[arg(long)]
    pub contamination: Option<f64>,
    #[arg(long)]
    pub k: Option<usize>,
    /// Controller event CSVs for the ATSPM method.
    #[arg(long = "atspm")]
    pub atspm: Vec<PathBuf>,
    /// JSON object mapping detector channel to phase.
    #[arg(long)]
    pub detector_map: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BackendKind {
    Toy,
    External,
}

#[derive(Debug, clap::Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub grid: PathBuf,
    #[arg(long)]
    pub network: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "toy")]
    pub backend: BackendKind,
    #[arg(long)]
    pub workers: Option<usize>,
    /// Skip scenarios with results already on disk.
    #[arg(long)]
    pub resume: bool,
    #[arg(long, default_value = "mean_travel_time")]
    pub metric: String,
    /// External simulator command with `${config}` and `${output}`.
    #[arg(long)]
    pub command: Option<String>,
    #[arg(long)]
    pub timeout: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SynthKind {
    Trajectories,
    Atspm,
    Network,
}

#[derive(Debug, clap::Args)]
pub struct SynthArgs {
    #[arg(value_enum)]
    pub kind: SynthKind,
    #[arg(long)]
    pub out: PathBuf,
    /// JSON generator parameters.
    #[arg(long)]
    pub params: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Also generate this many prior weeks as baselines.
    #[arg(long, default_value_t = 0)]
    pub weeks: u32,
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
        }
    };
    let level = if cli.verbose { "debug" } else { "info" };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).try_init();
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<BackendFailure>().is_some() {
                EXIT_BACKEND
            } else {
                EXIT_INPUT
            }
        }
    }
}

fn dispatch(cli: Cli) -> Result<i32> {
    let cfg = Config::load(cli.config.as_deref())?;
    match cli.command {
        Command::Masks(a) => cmd_masks(cfg, a),
        Command::Ingest(a) => cmd_ingest(cfg, a),
        Command::Analyze(a) => cmd_analyze(cfg, a),
        Command::Detect(a) => cmd_detect(cfg, a),
        Command::Sweep(a) => cmd_sweep(cfg, a),
        Command::Synth(a) => cmd_synth(a),
    }
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    serde_json::from_str(&read_text(path)?).with_context(|| format!("cannot parse {}", path.display()))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).with_context(|| format!("cannot create {}", parent.display()))?;
    }
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").with_context(|| format!("cannot write {}", path.display()))
}

fn required(flag: Option<PathBuf>, from_config: &Option<PathBuf>, name: &str) -> Result<PathBuf> {
    flag.or_else(|| from_config.clone()).ok_or_else(|| anyhow!("--{name} is required (or set paths.{name} in the config)"))
}

fn load_masks(path: &Path) -> Result<MaskSet> {
    MaskSet::from_geojson(&read_text(path)?).with_context(|| format!("invalid mask file {}", path.display()))
}

fn thread_pool(workers: usize) -> Result<rayon::ThreadPool> {
    Ok(rayon::ThreadPoolBuilder::new().num_threads(workers).build()?)
}

fn cmd_masks(mut cfg: Config, a: MasksArgs) -> Result<i32> {
    if let Some(w) = a.width {
        cfg.masks.half_width = w;
    }
    if let Some(r) = a.radius {
        cfg.masks.radius = r;
    }
    cfg.validate()?;
    let roads = read_features(&read_text(&a.roads)?).with_context(|| format!("cannot parse {}", a.roads.display()))?;
    let points = read_features(&read_text(&a.intersections)?)
        .with_context(|| format!("cannot parse {}", a.intersections.display()))?;
    let features = RawFeatures { lines: roads.lines, points: points.points };
    let set = MaskSet::build(&features, cfg.masks.half_width, cfg.masks.radius)?;
    write_json(&a.out, &set.to_geojson())?;
    println!(
        "masks: {} corridor, {} intersection -> {}",
        set.count(MaskKind::Corridor),
        set.count(MaskKind::Intersection),
        a.out.display()
    );
    Ok(EXIT_OK)
}

fn cmd_ingest(mut cfg: Config, a: IngestArgs) -> Result<i32> {
    if let Some(v) = a.min_duration {
        cfg.ingest.min_journey_duration_s = v;
    }
    if let Some(v) = a.min_length {
        cfg.ingest.min_fragment_length_m = v;
    }
    cfg.validate()?;
    let masks = load_masks(&required(a.masks, &cfg.paths.masks, "masks")?)?;
    let store_root = required(a.store, &cfg.paths.store, "store")?;
    let proj = *masks.projection();
    let load = load_trajectories(&a.files, &proj)?;
    if let Some(p) = &a.rejects {
        write_rejects(p, &load.rejects)?;
    }
    let raw = load.journeys.len();
    let kept = filter_journeys(load.journeys, cfg.ingest.min_journey_duration_s);
    let fragments = clip_to_masks(&kept, &masks, cfg.ingest.min_fragment_length_m);
    let store = JourneyStore::open(&store_root, proj)?;
    let written = store.write(&fragments, Some(&masks))?;
    println!(
        "ingest: {raw} journeys, {} kept, {} fragments, {written} written, {} rejected rows, {} duplicates",
        kept.len(),
        fragments.len(),
        load.rejects.len(),
        load.duplicates
    );
    Ok(EXIT_OK)
}

fn open_store_and_masks(
    cfg: &Config,
    store: Option<PathBuf>,
    masks: Option<PathBuf>,
) -> Result<(JourneyStore, MaskSet)> {
    let store = JourneyStore::open_existing(required(store, &cfg.paths.store, "store")?)?;
    let masks = load_masks(&required(masks, &cfg.paths.masks, "masks")?)?;
    if store.projection() != masks.projection() {
        bail!("store and mask file use different projection origins");
    }
    Ok((store, masks))
}

fn cmd_analyze(cfg: Config, a: AnalyzeArgs) -> Result<i32> {
    let (store, masks) = open_store_and_masks(&cfg, a.store, a.masks)?;
    let out = required(a.out, &cfg.paths.out, "out")?;
    let echoed = serde_json::to_value(&cfg)?;
    let pool = thread_pool(cfg.workers())?;
    let results: Vec<Result<(String, bool, PathBuf)>> = pool.install(|| {
        a.intersections
            .par_iter()
            .map(|id| {
                let mask = masks.intersection(id).ok_or_else(|| anyhow!("no intersection mask for {id:?}"))?;
                let fragments = store.load(Some(id), a.window.as_ref())?;
                let mut report = analyze_intersection(&fragments, mask, a.window.as_ref(), &cfg.analysis);
                report.config = Some(echoed.clone());
                let dir = report.write_bundle(&out, a.svg)?;
                Ok((id.clone(), report.empty, dir))
            })
            .collect()
    });
    for r in results {
        let (id, empty, dir) = r?;
        if empty {
            println!("{id}: EMPTY report (no journeys in window) -> {}", dir.display());
        } else {
            println!("{id}: report -> {}", dir.display());
        }
    }
    Ok(EXIT_OK)
}

/// Baseline windows and the cohort each stands for.
fn baseline_windows(spec: &str, current: &TimeWindow) -> Result<Vec<(Cohort, TimeWindow)>> {
    let cohorts = [Cohort::WeekMinus1, Cohort::WeekMinus2];
    if spec.trim() == "auto" {
        return Ok(cohorts.iter().map(|c| (*c, c.window(current))).collect());
    }
    let windows: Vec<TimeWindow> = spec
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| s.trim().parse::<TimeWindow>().map_err(|e| anyhow!("bad baseline window {s:?}: {e}")))
        .collect::<Result<_>>()?;
    if windows.len() > cohorts.len() {
        bail!("at most {} baseline windows may be given", cohorts.len());
    }
    Ok(cohorts.into_iter().zip(windows).collect())
}

fn detector_path(out: &Path, id: &str, window: &TimeWindow, method: Method) -> PathBuf {
    let name = match method {
        Method::Abod => "detect_abod.json",
        Method::Atspm => "detect_atspm.json",
    };
    out.join(id).join(window.label()).join(name)
}

fn cmd_detect(mut cfg: Config, a: DetectArgs) -> Result<i32> {
    if let Some(c) = a.contamination {
        cfg.detect.contamination = c;
    }
    if let Some(k) = a.k {
        cfg.detect.k = k;
    }
    if !a.atspm.is_empty() {
        cfg.paths.atspm = a.atspm.clone();
    }
    if let Some(p) = &a.detector_map {
        cfg.detect.detector_map = read_json(p)?;
    }
    cfg.validate()?;
    let out = required(a.out.clone(), &cfg.paths.out, "out")?;
    let baselines = baseline_windows(&a.baselines, &a.window)?;
    let pool = thread_pool(cfg.workers())?;
    let outputs: Vec<Result<DetectorOutput>> = match a.method {
        Method::Abod => {
            let (store, masks) = open_store_and_masks(&cfg, a.store.clone(), a.masks.clone())?;
            pool.install(|| {
                a.intersections.par_iter().map(|id| detect_abod(&cfg, &store, &masks, id, &a.window, &baselines)).collect()
            })
        }
        Method::Atspm => pool.install(|| {
            a.intersections.par_iter().map(|id| detect_atspm(&cfg, id, &a.window, &baselines)).collect()
        }),
    };
    let mut flagged = false;
    for o in outputs {
        let o = o?;
        let path = detector_path(&out, &o.intersection, &a.window, a.method);
        write_json(&path, &o)?;
        println!("{}: {} flag(s) -> {}", o.intersection, o.flags.len(), path.display());
        flagged |= !o.flags.is_empty();
    }
    Ok(if flagged { EXIT_FLAGS } else { EXIT_OK })
}

fn cohort_fragments(store: &JourneyStore, mask_id: &str, id: &str, window: &TimeWindow) -> Result<Vec<Journey>> {
    Ok(store
        .load(Some(id), Some(window))?
        .into_iter()
        .filter(|j| j.mask_id.as_deref().is_none_or(|m| m == mask_id))
        .filter(|j| j.start_time().is_some_and(|t| window.contains(t)))
        .collect())
}

fn detect_abod(
    cfg: &Config,
    store: &JourneyStore,
    masks: &MaskSet,
    id: &str,
    window: &TimeWindow,
    baselines: &[(Cohort, TimeWindow)],
) -> Result<DetectorOutput> {
    let mask = masks.intersection(id).ok_or_else(|| anyhow!("no intersection mask for {id:?}"))?;
    let mut cohorts = vec![(Cohort::Current, cohort_fragments(store, &mask.id, id, window)?)];
    for (cohort, w) in baselines {
        let frags = cohort_fragments(store, &mask.id, id, w)?;
        if frags.is_empty() {
            log::warn!("{id}: no baseline journeys in {}", w.label());
        } else {
            cohorts.push((*cohort, frags));
        }
    }
    if cohorts.len() == 1 {
        bail!("{id}: no baseline journeys available; outlier detection needs prior-week context");
    }
    let (mut output, _) = detect_trajectory_outliers(id, Some(window), &cohorts, &cfg.detect.abod_params())?;
    output.params = serde_json::json!({"detector": output.params, "config": cfg});
    Ok(output)
}

fn volumes(cfg: &Config, id: &str, window: &TimeWindow) -> Result<Option<PhaseVolumes>> {
    let load = load_atspm(&cfg.paths.atspm, id, window)?;
    if !load.rejects.is_empty() {
        log::warn!("{id}: {} unusable controller event rows", load.rejects.len());
    }
    if load.events.is_empty() {
        return Ok(None);
    }
    Ok(Some(phase_volumes(&load.events, &cfg.detect.detector_map, cfg.detect.bin_s, DETECTOR_ON)?))
}

fn detect_atspm(cfg: &Config, id: &str, window: &TimeWindow, baselines: &[(Cohort, TimeWindow)]) -> Result<DetectorOutput> {
    if cfg.paths.atspm.is_empty() {
        bail!("no controller event files given (--atspm)");
    }
    let current = volumes(cfg, id, window)?.unwrap_or_default();
    let mut base = Vec::new();
    for (_, w) in baselines {
        match volumes(cfg, id, w)? {
            Some(v) => base.push(v.shifted((window.start - w.start).round() as i64)),
            None => log::warn!("{id}: no baseline controller events in {}", w.label()),
        }
    }
    if base.is_empty() {
        log::warn!("{id}: no baseline available; every cell is reported as no-baseline");
    }
    let comparator = RelativeDeviation { threshold: cfg.detect.deviation_threshold };
    let refs: Vec<&PhaseVolumes> = base.iter().collect();
    let det = atspm_interruption(id, &current, &refs, &comparator);
    let flags: Vec<String> = det.flagged().map(|d| format!("phase{}@{}", d.phase, d.hour)).collect();
    let cells = det.deviations.len();
    Ok(DetectorOutput {
        intersection: id.to_string(),
        window: Some(*window),
        method: "atspm".into(),
        interruption_probability: if cells > 0 { flags.len() as f64 / cells as f64 } else { 0.0 },
        flags,
        scores: serde_json::to_value(&det)?,
        params: serde_json::json!({
            "comparator": comparator,
            "baselines_used": base.len(),
            "config": cfg,
        }),
    })
}

fn cmd_sweep(mut cfg: Config, a: SweepArgs) -> Result<i32> {
    if let Some(w) = a.workers {
        cfg.workers = Some(w);
    }
    if let Some(c) = &a.command {
        cfg.backend.command_template = Some(c.clone());
    }
    if let Some(t) = a.timeout {
        cfg.backend.timeout_s = t;
    }
    cfg.validate()?;
    let metric = Metric::parse(&a.metric)?;
    let grid: ParameterGrid = read_json(&a.grid)?;
    let network: Network = read_json(&a.network)?;
    network.validate()?;
    let out = required(a.out, &cfg.paths.out, "out")?;
    let expansion = expand_grid(&grid)?;
    for x in &expansion.excluded {
        log::warn!("excluded {}: {}", serde_json::to_string(&x.axis_values)?, x.reason);
    }
    if expansion.scenarios.is_empty() {
        bail!("every grid combination was excluded");
    }
    let backend: Box<dyn Backend> = match a.backend {
        BackendKind::Toy => Box::new(ToyBackend { params: grid.toy }),
        BackendKind::External => Box::new(ExternalBackend {
            command_template: cfg
                .backend
                .command_template
                .clone()
                .ok_or_else(|| anyhow!("the external backend needs --command or backend.command_template"))?,
            timeout_s: cfg.backend.timeout_s,
        }),
    };
    let output = SweepOutput { dir: Some(out.clone()), resume: a.resume };
    let result = run_parallel(&expansion.scenarios, &network, cfg.workers(), backend.as_ref(), &output).map_err(|e| {
        match e {
            crate::orchestrate::OrchestrateError::BackendUnavailable(m) => anyhow!(BackendFailure(m)),
            other => anyhow!(other),
        }
    })?;
    write_sweep_outputs(&out, &grid, &expansion, &result)?;
    let ok = result.rows.iter().filter(|r| r.status == RowStatus::Ok).count();
    println!(
        "sweep: {} scenarios, {} executed, {ok} ok, {} failed, {} excluded",
        result.rows.len(),
        result.executed,
        result.rows.len() - ok,
        expansion.excluded.len()
    );
    if ok == 0 {
        let first = result.rows.iter().find_map(|r| r.error.clone()).unwrap_or_default();
        return Err(anyhow!(BackendFailure(format!("no scenario completed; first error: {first}"))));
    }
    match select_best(&result, metric) {
        Ok(best) => {
            let value = best.aggregates.as_ref().and_then(|ag| metric.value(ag));
            println!(
                "best {}: {} = {} {}",
                metric.name(),
                best.scenario_id,
                value.map(|v| format!("{v:.3}")).unwrap_or_default(),
                serde_json::to_string(&best.axis_values)?
            );
        }
        Err(e) => println!("best {}: none ({e})", metric.name()),
    }
    Ok(EXIT_OK)
}

fn params_or_default<T: DeserializeOwned + Default>(path: &Option<PathBuf>) -> Result<T> {
    match path {
        Some(p) => read_json(p),
        None => Ok(T::default()),
    }
}

fn cmd_synth(a: SynthArgs) -> Result<i32> {
    fs::create_dir_all(&a.out).with_context(|| format!("cannot create {}", a.out.display()))?;
    match a.kind {
        SynthKind::Trajectories => {
            let mut p: TrajectorySynth = params_or_default(&a.params)?;
            if let Some(s) = a.seed {
                p.seed = s;
            }
            let current = synth_trajectories(&p)?;
            let mut rows = current.rows();
            for k in 1..=a.weeks {
                let week = TrajectorySynth {
                    seed: p.seed + u64::from(k),
                    start: p.start - f64::from(k) * WEEK_S,
                    braking_injections: 0,
                    blockage_injections: 0,
                    id_prefix: format!("{}w{k}-", p.id_prefix),
                    ..p.clone()
                };
                rows.extend(synth_trajectories(&week)?.rows());
            }
            let path = a.out.join("trajectories.csv");
            let mut w = csv::Writer::from_path(&path)?;
            for r in &rows {
                w.serialize(r)?;
            }
            w.flush()?;
            write_json(&a.out.join("truth.json"), &current.truth)?;
            write_json(&a.out.join("roads.geojson"), &current.roads_geojson(p.leg_length))?;
            write_json(&a.out.join("intersections.geojson"), &current.intersections_geojson())?;
            println!("synth: {} journeys, {} rows -> {}", current.journeys.len(), rows.len(), a.out.display());
        }
        SynthKind::Atspm => {
            let path = a.params.as_ref().ok_or_else(|| anyhow!("atspm synthesis needs --params"))?;
            let mut p: AtspmSynth = read_json(path)?;
            if let Some(s) = a.seed {
                p.seed = s;
            }
            let mut all = synth_atspm(&p)?;
            for k in 1..=a.weeks {
                let week = AtspmSynth { seed: p.seed + u64::from(k), start: p.start - f64::from(k) * WEEK_S, ..p.clone() };
                all.events.extend(synth_atspm(&week)?.events);
            }
            all.events.sort_by(|x, y| x.t.total_cmp(&y.t));
            let path = a.out.join("events.csv");
            let mut w = csv::Writer::from_path(&path)?;
            for e in &all.events {
                w.serialize(e)?;
            }
            w.flush()?;
            write_json(&a.out.join("detector_map.json"), &all.detector_map)?;
            println!("synth: {} events -> {}", all.events.len(), a.out.display());
        }
        SynthKind::Network => {
            let p: NetworkSynth = params_or_default(&a.params)?;
            let net = synth_network(&p)?;
            write_json(&a.out.join("network.json"), &net)?;
            write_json(&a.out.join("grid.json"), &example_grid(&net, p.kind))?;
            println!("synth: {} intersections, {} routes -> {}", net.intersections.len(), net.routes.len(), a.out.display());
        }
    }
    Ok(EXIT_OK)
}

/// A small sweep grid matched to a generated network's route names.
fn example_grid(net: &Network, kind: NetworkKind) -> serde_json::Value {
    use crate::masks::Direction;
    use crate::signal::Turn;
    let mut counts = BTreeMap::new();
    match kind {
        NetworkKind::Single => {
            for d in Direction::ALL {
                counts.insert(route_name(d, Turn::Through), 120u64);
                counts.insert(route_name(d, Turn::Left), 30);
                counts.insert(route_name(d, Turn::Right), 30);
            }
        }
        NetworkKind::Corridor => {
            for name in &net.corridor_routes {
                counts.insert(name.clone(), 200);
            }
            for id in &net.intersections {
                for d in [Direction::NB, Direction::SB] {
                    counts.insert(format!("{id}:{}", route_name(d, Turn::Through)), 60);
                }
            }
        }
    }
    let demand = Demand { counts, approaches: BTreeMap::new() };
    serde_json::json!({
        "demand": demand,
        "horizon": [0.0, 900.0],
        "toy": {"horizon_end": 1800.0},
        "axes": {
            "cycle_length": [90.0, 120.0],
            "splits": [{"weights": [1, 3, 1, 2, 1, 3, 1, 2]}],
            "offset": [0.0, 20.0],
        }
    })
}
