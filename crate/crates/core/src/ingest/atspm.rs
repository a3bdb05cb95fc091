use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{IngestError, Reject};
use crate::window::{parse_timestamp, TimeWindow};

/// Hi-res controller log code for "detector on".
pub const DETECTOR_ON: u32 = 82;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AtspmEvent {
    pub intersection_id: String,
    pub t: f64,
    pub event_code: u32,
    pub parameter: u32,
}

#[derive(Debug, Default)]
pub struct AtspmLoad {
    pub events: Vec<AtspmEvent>,
    pub rejects: Vec<Reject>,
}

fn canonical(name: &str) -> String {
    match name.trim().to_ascii_lowercase().as_str() {
        "signalid" | "signal_id" | "intersection" => "intersection_id".into(),
        "timestamp" | "time" => "t".into(),
        "eventcode" => "event_code".into(),
        "eventparam" | "event_param" | "eventparameter" => "parameter".into(),
        other => other.into(),
    }
}

fn parse_file(path: &Path) -> Result<(Vec<AtspmEvent>, Vec<Reject>), IngestError> {
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
        .map(canonical)
        .collect();
    let col = |name: &'static str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or(IngestError::MissingColumn { path: path.into(), column: name })
    };
    let (c_id, c_t, c_code, c_param) = (col("intersection_id")?, col("t")?, col("event_code")?, col("parameter")?);

    let mut events = Vec::new();
    let mut rejects = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let parsed = rec.map_err(|e| e.to_string()).and_then(|rec| {
            let field = |c: usize| rec.get(c).unwrap_or("");
            let int = |c: usize, what: &str| {
                field(c).parse::<u32>().map_err(|_| format!("{what} must be a non-negative integer, got {:?}", field(c)))
            };
            let id = field(c_id);
            if id.is_empty() {
                return Err("empty intersection_id".to_string());
            }
            Ok(AtspmEvent {
                intersection_id: id.to_string(),
                t: parse_timestamp(field(c_t))?,
                event_code: int(c_code, "event_code")?,
                parameter: int(c_param, "parameter")?,
            })
        });
        match parsed {
            Ok(ev) => events.push(ev),
            Err(reason) => rejects.push(Reject { file: file.clone(), row: i + 1, reason }),
        }
    }
    Ok((events, rejects))
}

/// Reads controller event CSVs and keeps one intersection's events inside
/// `window`, sorted by time. Ties keep file and row order.
pub fn load_atspm(paths: &[PathBuf], intersection_id: &str, window: &TimeWindow) -> Result<AtspmLoad, IngestError> {
    for p in paths {
        if !p.is_file() {
            return Err(IngestError::MissingFile(p.clone()));
        }
    }
    let parsed: Vec<_> = paths.par_iter().map(|p| parse_file(p)).collect::<Result<_, _>>()?;
    let mut out = AtspmLoad::default();
    for (events, rejects) in parsed {
        out.events
            .extend(events.into_iter().filter(|e| e.intersection_id == intersection_id && window.contains(e.t)));
        out.rejects.extend(rejects);
    }
    out.events.sort_by(|a, b| a.t.total_cmp(&b.t));
    Ok(out)
}

/// Detector actuation counts per (phase, bin start).
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct PhaseVolumes {
    pub counts: BTreeMap<(u32, i64), u64>,
    /// Actuations whose detector has no phase mapping, per bin start.
    pub unmapped: BTreeMap<i64, u64>,
}

impl PhaseVolumes {
    pub fn total(&self) -> u64 {
        self.counts.values().sum::<u64>() + self.unmapped.values().sum::<u64>()
    }

    pub fn get(&self, phase: u32, bin_start: i64) -> u64 {
        self.counts.get(&(phase, bin_start)).copied().unwrap_or(0)
    }

    /// Sum over all bins for one phase.
    pub fn phase_total(&self, phase: u32) -> u64 {
        self.counts.iter().filter(|((p, _), _)| *p == phase).map(|(_, c)| c).sum()
    }
}

/// Bins `detector_on_code` events by the phase their detector maps to.
pub fn phase_volumes(
    events: &[AtspmEvent],
    detector_map: &BTreeMap<u32, u32>,
    bin_s: f64,
    detector_on_code: u32,
) -> Result<PhaseVolumes, IngestError> {
    if detector_map.is_empty() {
        return Err(IngestError::Invalid("detector map is empty".into()));
    }
    if !(bin_s > 0.0) {
        return Err(IngestError::Invalid(format!("bin width must be positive, got {bin_s}")));
    }
    let mut out = PhaseVolumes::default();
    for e in events.iter().filter(|e| e.event_code == detector_on_code) {
        let bin = ((e.t / bin_s).floor() * bin_s) as i64;
        match detector_map.get(&e.parameter) {
            Some(&phase) => *out.counts.entry((phase, bin)).or_default() += 1,
            None => *out.unmapped.entry(bin).or_default() += 1,
        }
    }
    if !out.unmapped.is_empty() {
        log::warn!("{} detector actuations had no phase mapping", out.unmapped.values().sum::<u64>());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(id: &str, t: f64, code: u32, param: u32) -> AtspmEvent {
        AtspmEvent { intersection_id: id.into(), t, event_code: code, parameter: param }
    }

    #[test]
    fn window_and_intersection_filter() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("e.csv");
        std::fs::write(
            &p,
            "SignalId,Timestamp,EventCode,EventParam\nA,30,82,1\nA,10,82,1\nA,20,82,1\nB,20,82,1\nA,-1,x,1\n",
        )
        .unwrap();
        let w = TimeWindow::new(15.0, 30.0).unwrap();
        let load = load_atspm(std::slice::from_ref(&p), "A", &w).unwrap();
        assert_eq!(load.events.len(), 1);
        assert_eq!(load.events[0].t, 20.0);
        assert_eq!(load.rejects.len(), 1);
        assert!(load_atspm(&[p], "Z", &w).unwrap().events.is_empty());
    }

    #[test]
    fn volumes_count_and_bucket() {
        let map = BTreeMap::from([(5, 2)]);
        let mut events: Vec<_> = (0..10).map(|k| ev("A", 3600.0 + k as f64 * 60.0, DETECTOR_ON, 5)).collect();
        events.push(ev("A", 3700.0, 81, 5));
        events.push(ev("A", 3700.0, DETECTOR_ON, 9));
        let v = phase_volumes(&events, &map, 3600.0, DETECTOR_ON).unwrap();
        assert_eq!(v.counts, BTreeMap::from([((2, 3600), 10)]));
        assert_eq!(v.unmapped, BTreeMap::from([(3600, 1)]));
        assert_eq!(v.total(), 11);
        assert!(phase_volumes(&[], &map, 3600.0, DETECTOR_ON).unwrap().counts.is_empty());
        assert!(phase_volumes(&events, &BTreeMap::new(), 3600.0, DETECTOR_ON).is_err());
    }
}
