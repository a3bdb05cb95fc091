//! Loading, validation and preprocessing of probe trajectories, plus
//! controller event logs and the partitioned journey store.

mod atspm;
mod store;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use atspm::{load_atspm, phase_volumes, AtspmEvent, AtspmLoad, PhaseVolumes, DETECTOR_ON};
pub use store::{JourneyStore, PartitionEntry, StoreManifest};

use crate::geo::{clip_journey, GeoPoint, Projection};
use crate::masks::MaskSet;
pub use crate::trajectory::{Ignition, Journey, Sample};
use crate::window::parse_timestamp;

/// Journeys shorter than this (seconds) are dropped.
pub const MIN_JOURNEY_DURATION_S: f64 = 120.0;
/// Clipped fragments shorter than this (meters) are dropped.
pub const MIN_FRAGMENT_LENGTH_M: f64 = 150.0;
/// Inter-sample gap above which a journey counts as privacy-gapped.
pub const GAP_THRESHOLD_S: f64 = 30.0;

/// Vendor export column names and the canonical names they map to. The
/// vendor's columnar cloud export is not read directly; convert it to CSV or
/// NDJSON with either set of names.
pub const VENDOR_COLUMN_MAP: &[(&str, &str)] = &[
    ("JourneyId", "journey_id"),
    ("CapturedTimestamp", "timestamp"),
    ("Latitude", "lat"),
    ("Longitude", "lon"),
    ("Speed", "speed_mps"),
    ("IgnitionStatus", "ignition"),
];

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("input file not found: {0}")]
    MissingFile(PathBuf),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
    #[error("{path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
    #[error("{path}: missing required column {column:?}")]
    MissingColumn { path: PathBuf, column: &'static str },
    #[error("store projection origin {stored:?} differs from {given:?}")]
    OriginMismatch { stored: GeoPoint, given: GeoPoint },
    #[error("{0}")]
    Invalid(String),
}

pub(crate) fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> IngestError + '_ {
    move |source| IngestError::Io { path: path.to_path_buf(), source }
}

/// One unusable input row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reject {
    pub file: String,
    /// 1-based record number within the file (header excluded).
    pub row: usize,
    pub reason: String,
}

/// Writes rejects as NDJSON `{file, row, reason}`.
pub fn write_rejects(path: &Path, rejects: &[Reject]) -> Result<(), IngestError> {
    let mut out = String::new();
    for r in rejects {
        out.push_str(&serde_json::to_string(r).expect("reject serializes"));
        out.push('\n');
    }
    fs::write(path, out).map_err(io_err(path))
}

/// Canonical trajectory row as found in CSV / NDJSON inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRow {
    pub journey_id: String,
    pub timestamp: f64,
    pub lat: f64,
    pub lon: f64,
    #[serde(default)]
    pub speed_mps: Option<f64>,
    #[serde(default)]
    pub ignition: Ignition,
}

#[derive(Debug, Default)]
pub struct TrajectoryLoad {
    pub journeys: Vec<Journey>,
    pub rejects: Vec<Reject>,
    /// Rows dropped as exact (journey_id, timestamp) duplicates.
    pub duplicates: usize,
}

fn canonical_column(name: &str) -> String {
    let name = name.trim();
    VENDOR_COLUMN_MAP
        .iter()
        .find(|(vendor, _)| vendor.eq_ignore_ascii_case(name))
        .map(|(_, canon)| canon.to_string())
        .unwrap_or_else(|| name.to_ascii_lowercase())
}

fn validate_row(row: &TrajectoryRow) -> Result<(), String> {
    if row.journey_id.trim().is_empty() {
        return Err("empty journey_id".into());
    }
    if !row.timestamp.is_finite() {
        return Err("non-finite timestamp".into());
    }
    GeoPoint::new(row.lon, row.lat).map_err(|e| e.to_string())?;
    if let Some(v) = row.speed_mps {
        if !v.is_finite() || v < 0.0 {
            return Err(format!("invalid speed {v}"));
        }
    }
    Ok(())
}

type Parsed = (Vec<(usize, TrajectoryRow)>, Vec<Reject>);

fn parse_csv(path: &Path) -> Result<Parsed, IngestError> {
    let file = path.display().to_string();
    let mut rdr = csv::ReaderBuilder::new()
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|source| IngestError::Csv { path: path.into(), source })?;
    let headers: Vec<String> = rdr
        .headers()
        .map_err(|source| IngestError::Csv { path: path.into(), source })?
        .iter()
        .map(canonical_column)
        .collect();
    let col = |name: &'static str| headers.iter().position(|h| h == name);
    let need = |name: &'static str| col(name).ok_or(IngestError::MissingColumn { path: path.into(), column: name });
    let (c_id, c_ts, c_lat, c_lon) = (need("journey_id")?, need("timestamp")?, need("lat")?, need("lon")?);
    let (c_speed, c_ign) = (col("speed_mps"), col("ignition"));

    let mut rows = Vec::new();
    let mut rejects = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rowno = i + 1;
        let parsed = rec.map_err(|e| e.to_string()).and_then(|rec| {
            let field = |c: usize| rec.get(c).unwrap_or("");
            let num = |c: usize, what: &str| {
                field(c).parse::<f64>().map_err(|_| format!("unparseable {what} {:?}", field(c)))
            };
            let speed = match c_speed.map(field) {
                None | Some("") => None,
                Some(s) => Some(s.parse::<f64>().map_err(|_| format!("unparseable speed {s:?}"))?),
            };
            let row = TrajectoryRow {
                journey_id: field(c_id).to_string(),
                timestamp: parse_timestamp(field(c_ts))?,
                lat: num(c_lat, "lat")?,
                lon: num(c_lon, "lon")?,
                speed_mps: speed,
                ignition: c_ign.map(field).unwrap_or("").parse()?,
            };
            validate_row(&row)?;
            Ok(row)
        });
        match parsed {
            Ok(row) => rows.push((rowno, row)),
            Err(reason) => rejects.push(Reject { file: file.clone(), row: rowno, reason }),
        }
    }
    Ok((rows, rejects))
}

fn parse_ndjson(path: &Path) -> Result<Parsed, IngestError> {
    let file = path.display().to_string();
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let mut rows = Vec::new();
    let mut rejects = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let rowno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let parsed = serde_json::from_str::<serde_json::Value>(line)
            .map_err(|e| e.to_string())
            .and_then(|v| {
                let obj = v.as_object().ok_or("row is not an object")?;
                let mut canon = serde_json::Map::new();
                for (k, val) in obj {
                    canon.insert(canonical_column(k), val.clone());
                }
                // timestamps may be strings
                if let Some(serde_json::Value::String(s)) = canon.get("timestamp") {
                    let t = parse_timestamp(s)?;
                    canon.insert("timestamp".into(), serde_json::json!(t));
                }
                if let Some(serde_json::Value::Number(n)) = canon.get("journey_id") {
                    let s = n.to_string();
                    canon.insert("journey_id".into(), serde_json::Value::String(s));
                }
                serde_json::from_value::<TrajectoryRow>(serde_json::Value::Object(canon)).map_err(|e| e.to_string())
            })
            .and_then(|row| validate_row(&row).map(|_| row));
        match parsed {
            Ok(row) => rows.push((rowno, row)),
            Err(reason) => rejects.push(Reject { file: file.clone(), row: rowno, reason }),
        }
    }
    Ok((rows, rejects))
}

fn parse_file(path: &Path) -> Result<Parsed, IngestError> {
    if !path.is_file() {
        return Err(IngestError::MissingFile(path.to_path_buf()));
    }
    match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
        Some("ndjson" | "jsonl" | "json") => parse_ndjson(path),
        _ => parse_csv(path),
    }
}

/// Reads trajectory files, groups rows into journeys and projects them.
///
/// Files are parsed concurrently; the merge is a stable sort by
/// (journey_id, timestamp) over rows in argument order, so the first of any
/// duplicate timestamps wins. Missing speeds are reconstructed afterwards.
pub fn load_trajectories(paths: &[PathBuf], proj: &Projection) -> Result<TrajectoryLoad, IngestError> {
    for p in paths {
        if !p.is_file() {
            return Err(IngestError::MissingFile(p.clone()));
        }
    }
    let parsed: Vec<Parsed> = paths.par_iter().map(|p| parse_file(p)).collect::<Result<_, _>>()?;

    let mut rejects = Vec::new();
    let mut rows: Vec<TrajectoryRow> = Vec::new();
    for (file_rows, file_rejects) in parsed {
        rows.extend(file_rows.into_iter().map(|(_, r)| r));
        rejects.extend(file_rejects);
    }
    rows.sort_by(|a, b| a.journey_id.cmp(&b.journey_id).then(a.timestamp.total_cmp(&b.timestamp)));

    let mut groups: BTreeMap<String, Vec<Sample>> = BTreeMap::new();
    let mut duplicates = 0;
    for row in rows {
        let samples = groups.entry(row.journey_id.clone()).or_default();
        if samples.last().is_some_and(|s| s.t == row.timestamp) {
            duplicates += 1;
            continue;
        }
        let pos = proj
            .project(GeoPoint { lon: row.lon, lat: row.lat })
            .map_err(|e| IngestError::Invalid(e.to_string()))?;
        samples.push(Sample { t: row.timestamp, pos, speed: row.speed_mps, ignition: row.ignition });
    }
    let journeys = groups
        .into_iter()
        .map(|(id, samples)| {
            let mut j = Journey::new(id, samples);
            j.fill_missing_speeds();
            j
        })
        .collect();
    Ok(TrajectoryLoad { journeys, rejects, duplicates })
}

/// Drops ignition-off samples, then journeys shorter than `min_duration`.
pub fn filter_journeys(journeys: Vec<Journey>, min_duration: f64) -> Vec<Journey> {
    journeys
        .into_iter()
        .filter_map(|mut j| {
            j.samples.retain(|s| s.ignition != Ignition::Off);
            (j.samples.len() >= 2 && j.duration() >= min_duration).then_some(j)
        })
        .collect()
}

/// Clips every journey against every mask and keeps fragments at least
/// `min_length` meters long, tagged with the mask id. Output is sorted by
/// (journey id, mask id, part).
pub fn clip_to_masks(journeys: &[Journey], masks: &MaskSet, min_length: f64) -> Vec<Journey> {
    let mut out: Vec<Journey> = journeys
        .par_iter()
        .flat_map_iter(|j| {
            let bbox = crate::geo::BBox::of(j.samples.iter().map(|s| s.pos));
            let mut frags = Vec::new();
            for mask in masks.masks() {
                let mut part = 0;
                for poly in &mask.polygons {
                    if bbox.is_some_and(|b| !b.intersects(&poly.bbox())) {
                        continue;
                    }
                    for mut f in clip_journey(j, poly) {
                        if f.path_length() < min_length {
                            continue;
                        }
                        part += 1;
                        f.part = part;
                        f.mask_id = Some(mask.id.clone());
                        frags.push(f);
                    }
                }
            }
            frags
        })
        .collect();
    out.sort_by(|a, b| a.key().cmp(&b.key()));
    out
}
