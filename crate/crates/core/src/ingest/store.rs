use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::{io_err, IngestError};
use crate::geo::{GeoPoint, Projection};
use crate::masks::MaskSet;
use crate::trajectory::Journey;
use crate::window::TimeWindow;

const MANIFEST: &str = "manifest.json";
/// Partition file name for journeys not tied to any intersection.
const UNASSIGNED: &str = "_all";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionEntry {
    pub date: String,
    pub hour: u32,
    pub intersection: String,
    pub path: String,
    pub journeys: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoreManifest {
    pub projection_origin: GeoPoint,
    pub partitions: Vec<PartitionEntry>,
}

/// Journeys on disk as `date=YYYY-MM-DD/hour=HH/{intersection}.ndjson`,
/// keyed by the hour of each journey's first sample. Positions are stored in
/// the planar frame recorded in the manifest.
#[derive(Debug, Clone)]
pub struct JourneyStore {
    root: PathBuf,
    projection: Projection,
}

fn partition_of(t: f64) -> (String, u32) {
    let dt = DateTime::<Utc>::from_timestamp(t.floor() as i64, 0).unwrap_or_default();
    (dt.format("%Y-%m-%d").to_string(), dt.format("%H").to_string().parse().unwrap_or(0))
}

fn read_journeys(path: &Path) -> Result<Vec<Journey>, IngestError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(|source| IngestError::Json { path: path.into(), source }))
        .collect()
}

impl JourneyStore {
    /// Opens `root`, creating it if needed. An existing store must have been
    /// written with the same projection origin.
    pub fn open(root: impl Into<PathBuf>, projection: Projection) -> Result<Self, IngestError> {
        let root = root.into();
        fs::create_dir_all(&root).map_err(io_err(&root))?;
        let store = Self { root, projection };
        if let Some(m) = store.manifest()? {
            if m.projection_origin != projection.origin() {
                return Err(IngestError::OriginMismatch { stored: m.projection_origin, given: projection.origin() });
            }
        }
        Ok(store)
    }

    /// Opens an existing store using the projection in its manifest.
    pub fn open_existing(root: impl Into<PathBuf>) -> Result<Self, IngestError> {
        let root = root.into();
        let path = root.join(MANIFEST);
        let text = fs::read_to_string(&path).map_err(io_err(&path))?;
        let m: StoreManifest =
            serde_json::from_str(&text).map_err(|source| IngestError::Json { path: path.clone(), source })?;
        let projection = Projection::new(m.projection_origin).map_err(|e| IngestError::Invalid(e.to_string()))?;
        Ok(Self { root, projection })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn projection(&self) -> &Projection {
        &self.projection
    }

    pub fn manifest(&self) -> Result<Option<StoreManifest>, IngestError> {
        let path = self.root.join(MANIFEST);
        if !path.exists() {
            return Ok(None);
        }
        let text = fs::read_to_string(&path).map_err(io_err(&path))?;
        serde_json::from_str(&text).map(Some).map_err(|source| IngestError::Json { path, source })
    }

    fn partition_path(&self, date: &str, hour: u32, intersection: &str) -> PathBuf {
        self.root.join(format!("date={date}")).join(format!("hour={hour:02}")).join(format!("{intersection}.ndjson"))
    }

    /// Merges journeys into their partitions. A stored journey with the same
    /// (id, mask, part) is replaced, so re-ingesting is idempotent. The
    /// intersection key comes from the fragment's mask when `masks` knows it.
    pub fn write(&self, journeys: &[Journey], masks: Option<&MaskSet>) -> Result<usize, IngestError> {
        let mut groups: BTreeMap<(String, u32, String), Vec<&Journey>> = BTreeMap::new();
        for j in journeys {
            let Some(t0) = j.start_time() else { continue };
            let (date, hour) = partition_of(t0);
            let inter = j
                .mask_id
                .as_deref()
                .and_then(|id| masks.and_then(|m| m.get(id)))
                .and_then(|m| m.intersection_id.clone())
                .unwrap_or_else(|| UNASSIGNED.to_string());
            groups.entry((date, hour, inter)).or_default().push(j);
        }
        for ((date, hour, inter), new) in &groups {
            let path = self.partition_path(date, *hour, inter);
            let mut merged: BTreeMap<(String, Option<String>, u32), Journey> = BTreeMap::new();
            if path.exists() {
                for j in read_journeys(&path)? {
                    merged.insert((j.id.clone(), j.mask_id.clone(), j.part), j);
                }
            }
            for j in new {
                merged.insert((j.id.clone(), j.mask_id.clone(), j.part), (*j).clone());
            }
            let mut body = String::new();
            for j in merged.values() {
                body.push_str(&serde_json::to_string(j).expect("journey serializes"));
                body.push('\n');
            }
            let dir = path.parent().expect("partition has a parent");
            fs::create_dir_all(dir).map_err(io_err(dir))?;
            fs::write(&path, body).map_err(io_err(&path))?;
        }
        self.rebuild_manifest()?;
        Ok(journeys.len())
    }

    fn rebuild_manifest(&self) -> Result<StoreManifest, IngestError> {
        let mut partitions = Vec::new();
        for path in self.partition_files()? {
            let rel = path.strip_prefix(&self.root).unwrap_or(&path);
            let parts: Vec<String> = rel.iter().map(|s| s.to_string_lossy().into_owned()).collect();
            if parts.len() != 3 {
                continue;
            }
            let date = parts[0].trim_start_matches("date=").to_string();
            let hour = parts[1].trim_start_matches("hour=").parse().unwrap_or(0);
            let intersection = parts[2].trim_end_matches(".ndjson").to_string();
            let journeys = read_journeys(&path)?.len();
            partitions.push(PartitionEntry { date, hour, intersection, path: rel.display().to_string(), journeys });
        }
        let m = StoreManifest { projection_origin: self.projection.origin(), partitions };
        let path = self.root.join(MANIFEST);
        let text = serde_json::to_string_pretty(&m).expect("manifest serializes");
        fs::write(&path, text).map_err(io_err(&path))?;
        Ok(m)
    }

    fn partition_files(&self) -> Result<Vec<PathBuf>, IngestError> {
        let mut out = Vec::new();
        let list = |p: &Path| -> Result<Vec<PathBuf>, IngestError> {
            let mut v: Vec<PathBuf> = fs::read_dir(p).map_err(io_err(p))?.filter_map(|e| e.ok().map(|e| e.path())).collect();
            v.sort();
            Ok(v)
        };
        for date in list(&self.root)?.into_iter().filter(|p| p.is_dir()) {
            for hour in list(&date)?.into_iter().filter(|p| p.is_dir()) {
                out.extend(list(&hour)?.into_iter().filter(|p| p.extension().is_some_and(|e| e == "ndjson")));
            }
        }
        Ok(out)
    }

    /// Journeys whose partition hour overlaps `window`, optionally limited to
    /// one intersection, sorted by (id, mask, part).
    pub fn load(&self, intersection: Option<&str>, window: Option<&TimeWindow>) -> Result<Vec<Journey>, IngestError> {
        let mut out = Vec::new();
        for path in self.partition_files()? {
            let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            if intersection.is_some_and(|i| i != stem) {
                continue;
            }
            for j in read_journeys(&path)? {
                let keep = match (window, j.start_time()) {
                    (Some(w), Some(t0)) => {
                        let t1 = t0 + j.duration();
                        t0 < w.end && t1 >= w.start
                    }
                    _ => true,
                };
                if keep {
                    out.push(j);
                }
            }
        }
        out.sort_by(|a, b| a.key().cmp(&b.key()));
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trajectory::Sample;

    fn proj() -> Projection {
        Projection::new(GeoPoint::new(-81.0, 29.0).unwrap()).unwrap()
    }

    #[test]
    fn round_trip_is_exact_and_idempotent() {
        let dir = tempfile::tempdir().unwrap();
        let store = JourneyStore::open(dir.path(), proj()).unwrap();
        let t0 = 1_710_262_800.0;
        let js = vec![
            Journey::new("a", vec![Sample::new(t0 + 0.123, 0.1 + 0.2, -7.77777, 3.3), Sample::new(t0 + 3.0, 1.0 / 3.0, 2.0, 0.0)]),
            Journey::new("b", vec![Sample::new(t0 + 3700.0, 5.0, 5.0, 1.0), Sample::new(t0 + 3703.0, 6.0, 5.0, 1.0)]),
        ];
        store.write(&js, None).unwrap();
        store.write(&js, None).unwrap();
        assert_eq!(store.load(None, None).unwrap(), js);
        let m = store.manifest().unwrap().unwrap();
        assert_eq!(m.partitions.len(), 2);
        assert_eq!(m.partitions[0].path, "date=2024-03-12/hour=17/_all.ndjson");
        assert!(m.partitions.iter().all(|p| p.journeys == 1));

        let w = TimeWindow::new(t0 + 3600.0, t0 + 7200.0).unwrap();
        let hour18 = store.load(None, Some(&w)).unwrap();
        assert_eq!(hour18.len(), 1);
        assert_eq!(hour18[0].id, "b");
    }

    #[test]
    fn origin_mismatch_refused() {
        let dir = tempfile::tempdir().unwrap();
        JourneyStore::open(dir.path(), proj()).unwrap().write(&[], None).unwrap();
        let other = Projection::new(GeoPoint::new(-80.0, 29.0).unwrap()).unwrap();
        assert!(matches!(JourneyStore::open(dir.path(), other), Err(IngestError::OriginMismatch { .. })));
        assert_eq!(JourneyStore::open_existing(dir.path()).unwrap().projection().origin(), proj().origin());
    }
}
