use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::*;
use crate::ingest::GAP_THRESHOLD_S;
use crate::window::TimeWindow;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CellStat {
    #[default]
    Mean,
    Median,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisOptions {
    pub stop_speed_mps: f64,
    pub min_stop_s: f64,
    pub queue_min_stop_s: f64,
    pub braking_g: f64,
    pub braking_sustain_s: f64,
    pub exclude_gapped: bool,
    pub gap_threshold_s: f64,
    pub travel_time_stat: CellStat,
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        Self {
            stop_speed_mps: DEFAULT_STOP_SPEED_MPS,
            min_stop_s: DEFAULT_MIN_STOP_S,
            queue_min_stop_s: DEFAULT_QUEUE_MIN_STOP_S,
            braking_g: DEFAULT_BRAKING_G,
            braking_sustain_s: DEFAULT_BRAKING_SUSTAIN_S,
            exclude_gapped: false,
            gap_threshold_s: GAP_THRESHOLD_S,
            travel_time_stat: CellStat::Mean,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Unclassified {
    pub journey_id: String,
    pub part: u32,
    pub reason: String,
}

/// All metrics for one intersection mask and time window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub intersection: String,
    pub mask_id: String,
    pub window: Option<TimeWindow>,
    pub fragments: usize,
    pub gapped_excluded: usize,
    pub stops: Vec<StopEvent>,
    pub movements: Vec<MovementRecord>,
    pub unclassified: Vec<Unclassified>,
    pub od: OdMatrix,
    pub travel_time: TravelTimeMatrix,
    pub travel_time_stat: CellStat,
    pub queues: Vec<QueueDistribution>,
    pub queue_stops_excluded: usize,
    pub braking: Vec<BrakingEvent>,
    /// Set when no fragment fell in the mask and window.
    pub empty: bool,
    pub options: AnalysisOptions,
    /// Caller-supplied settings echoed into report.json.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<serde_json::Value>,
}

struct PerFragment {
    stops: Vec<StopEvent>,
    movement: Result<MovementRecord, Unclassified>,
    braking: Vec<BrakingEvent>,
}

/// Runs every per-journey metric over the fragments clipped to `mask` and
/// folds them in (journey id, part) order. Stops take the approach of their
/// fragment's origin.
pub fn analyze_intersection(
    fragments: &[Journey],
    mask: &Mask,
    window: Option<&TimeWindow>,
    opts: &AnalysisOptions,
) -> AnalysisReport {
    let mut selected: Vec<&Journey> = fragments
        .iter()
        .filter(|j| j.mask_id.as_deref().is_none_or(|m| m == mask.id))
        .filter(|j| match (window, j.start_time()) {
            (Some(w), Some(t0)) => w.contains(t0),
            _ => true,
        })
        .collect();
    let before = selected.len();
    if opts.exclude_gapped {
        selected.retain(|j| !j.is_gapped(opts.gap_threshold_s));
    }
    let gapped_excluded = before - selected.len();
    selected.sort_by(|a, b| a.key().cmp(&b.key()));

    let per: Vec<PerFragment> = selected
        .par_iter()
        .map(|j| {
            let movement = classify_movement(j, mask).map_err(|e| Unclassified {
                journey_id: j.id.clone(),
                part: j.part,
                reason: e.to_string(),
            });
            let origin = movement.as_ref().ok().map(|m| m.origin);
            let stops = detect_stops(j, opts.stop_speed_mps, opts.min_stop_s)
                .into_iter()
                .map(|s| StopEvent { approach: origin, ..s })
                .collect();
            PerFragment { stops, movement, braking: detect_braking(j, opts.braking_g, opts.braking_sustain_s) }
        })
        .collect();

    let mut stops = Vec::new();
    let mut movements = Vec::new();
    let mut unclassified = Vec::new();
    let mut braking = Vec::new();
    for p in per {
        stops.extend(p.stops);
        braking.extend(p.braking);
        match p.movement {
            Ok(m) => movements.push(m),
            Err(u) => unclassified.push(u),
        }
    }
    let travel_time = match opts.travel_time_stat {
        CellStat::Mean => travel_time_matrix(&movements),
        CellStat::Median => travel_time_median_matrix(&movements),
    };
    let q = queue_distributions(&stops, mask, opts.queue_min_stop_s);
    AnalysisReport {
        intersection: mask.intersection_id.clone().unwrap_or_else(|| mask.id.clone()),
        mask_id: mask.id.clone(),
        window: window.copied(),
        fragments: selected.len(),
        gapped_excluded,
        od: od_matrix(&movements),
        travel_time,
        travel_time_stat: opts.travel_time_stat,
        stops,
        movements,
        unclassified,
        queues: q.distributions,
        queue_stops_excluded: q.excluded,
        braking,
        empty: selected.is_empty(),
        options: opts.clone(),
        config: None,
    }
}

fn matrix_csv<T>(cells: &[[T; 4]; 4], fmt: impl Fn(&T) -> String) -> String {
    let mut out = String::from("origin");
    for d in Direction::ALL {
        write!(out, ",{d}").unwrap();
    }
    out.push('\n');
    for o in Direction::ALL {
        out.push_str(o.as_str());
        for d in Direction::ALL {
            write!(out, ",{}", fmt(&cells[o.index()][d.index()])).unwrap();
        }
        out.push('\n');
    }
    out
}

fn write_rows<S: Serialize>(path: &Path, rows: impl IntoIterator<Item = S>, header: &[&str]) -> std::io::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()
}

/// Histogram of `values` as a standalone SVG.
pub fn svg_histogram(values: &[f64], bins: usize, title: &str, x_label: &str) -> String {
    let (w, h, pad) = (480.0, 240.0, 36.0);
    let bins = bins.max(1);
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut counts = vec![0usize; bins];
    if lo.is_finite() {
        let width = ((hi - lo) / bins as f64).max(1e-9);
        for v in values {
            let k = (((v - lo) / width) as usize).min(bins - 1);
            counts[k] += 1;
        }
    }
    let peak = counts.iter().copied().max().unwrap_or(0).max(1) as f64;
    let bw = (w - 2.0 * pad) / bins as f64;
    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\">\n\
         <text x=\"{}\" y=\"16\" text-anchor=\"middle\">{title}</text>\n",
        w / 2.0
    );
    for (k, c) in counts.iter().enumerate() {
        let bh = (h - 2.0 * pad) * *c as f64 / peak;
        writeln!(
            svg,
            "<rect x=\"{:.1}\" y=\"{:.1}\" width=\"{:.1}\" height=\"{:.1}\" fill=\"steelblue\"/>",
            pad + k as f64 * bw,
            h - pad - bh,
            (bw - 1.0).max(0.5),
            bh
        )
        .unwrap();
    }
    if lo.is_finite() {
        writeln!(svg, "<text x=\"{pad}\" y=\"{}\">{lo:.0}</text>", h - pad / 3.0).unwrap();
        writeln!(svg, "<text x=\"{}\" y=\"{}\" text-anchor=\"end\">{hi:.0}</text>", w - pad, h - pad / 3.0).unwrap();
    }
    writeln!(svg, "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{x_label}</text>\n</svg>", w / 2.0, h - 4.0).unwrap();
    svg
}

impl AnalysisReport {
    fn window_label(&self) -> String {
        self.window.map(|w| w.label()).unwrap_or_else(|| "all".into())
    }

    /// Writes `{intersection}/{window}/` with report.json, the matrix and
    /// event CSVs and, when `svg` is set, a stop-duration histogram.
    pub fn write_bundle(&self, out_dir: &Path, svg: bool) -> std::io::Result<PathBuf> {
        let dir = out_dir.join(&self.intersection).join(self.window_label());
        fs::create_dir_all(&dir)?;
        fs::write(dir.join("report.json"), serde_json::to_string_pretty(self).map_err(std::io::Error::other)?)?;
        fs::write(dir.join("od.csv"), matrix_csv(&self.od.0, |c| c.to_string()))?;
        fs::write(
            dir.join("tt.csv"),
            matrix_csv(&self.travel_time.0, |c| c.map(|v| format!("{v:.3}")).unwrap_or_default()),
        )?;
        write_rows(
            &dir.join("stops.csv"),
            self.stops.iter().map(|s| {
                (&s.journey_id, s.t_start, s.duration, s.location.x, s.location.y, s.approach.map(|d| d.as_str()))
            }),
            &["journey_id", "t_start", "duration", "x", "y", "approach"],
        )?;
        write_rows(
            &dir.join("queues.csv"),
            self.queues.iter().map(|q| (q.approach.as_str(), q.mu, q.sigma, q.n)),
            &["approach", "mu", "sigma", "n"],
        )?;
        write_rows(
            &dir.join("braking.csv"),
            self.braking.iter().map(|b| (&b.journey_id, b.t_start, b.duration, b.peak_decel, b.location.x, b.location.y)),
            &["journey_id", "t_start", "duration", "peak_decel", "x", "y"],
        )?;
        if svg {
            let durations: Vec<f64> = self.stops.iter().map(|s| s.duration).collect();
            fs::write(dir.join("stops.svg"), svg_histogram(&durations, 20, "Stop durations", "seconds"))?;
        }
        Ok(dir)
    }
}
