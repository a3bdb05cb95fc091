//! Single JSON configuration document shared by every command. Unknown keys
//! are rejected and every threshold must be positive.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analytics::AnalysisOptions;
use crate::detect::{AbodParams, Feature, NormalizeStats, DEFAULT_CONTAMINATION, DEFAULT_DEVIATION_THRESHOLD, DEFAULT_K};
use crate::ingest::{MIN_FRAGMENT_LENGTH_M, MIN_JOURNEY_DURATION_S};
use crate::masks::{DEFAULT_HALF_WIDTH_M, DEFAULT_RADIUS_M};

pub const CONFIG_ENV: &str = "TRAFFICLENS_CONFIG";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Parse { path: PathBuf, source: serde_json::Error },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub store: Option<PathBuf>,
    pub masks: Option<PathBuf>,
    pub out: Option<PathBuf>,
    /// Controller event logs used by the ATSPM detector.
    pub atspm: Vec<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MaskConfig {
    pub half_width: f64,
    pub radius: f64,
}

impl Default for MaskConfig {
    fn default() -> Self {
        Self { half_width: DEFAULT_HALF_WIDTH_M, radius: DEFAULT_RADIUS_M }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IngestConfig {
    pub min_journey_duration_s: f64,
    pub min_fragment_length_m: f64,
}

impl Default for IngestConfig {
    fn default() -> Self {
        Self { min_journey_duration_s: MIN_JOURNEY_DURATION_S, min_fragment_length_m: MIN_FRAGMENT_LENGTH_M }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectConfig {
    pub k: usize,
    pub contamination: f64,
    pub features: Vec<Feature>,
    pub stats: NormalizeStats,
    pub deviation_threshold: f64,
    pub bin_s: f64,
    /// Detector channel to phase.
    pub detector_map: BTreeMap<u32, u32>,
}

impl Default for DetectConfig {
    fn default() -> Self {
        Self {
            k: DEFAULT_K,
            contamination: DEFAULT_CONTAMINATION,
            features: Feature::ALL.to_vec(),
            stats: NormalizeStats::Pooled,
            deviation_threshold: DEFAULT_DEVIATION_THRESHOLD,
            bin_s: 3600.0,
            detector_map: BTreeMap::new(),
        }
    }
}

impl DetectConfig {
    pub fn abod_params(&self) -> AbodParams {
        AbodParams { k: self.k, contamination: self.contamination, features: self.features.clone(), stats: self.stats }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackendConfig {
    /// Shell command with `${config}` and `${output}` placeholders.
    pub command_template: Option<String>,
    pub timeout_s: f64,
}

impl Default for BackendConfig {
    fn default() -> Self {
        Self { command_template: None, timeout_s: 600.0 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub paths: Paths,
    pub masks: MaskConfig,
    pub ingest: IngestConfig,
    pub analysis: AnalysisOptions,
    pub detect: DetectConfig,
    pub backend: BackendConfig,
    /// Worker threads for sweeps and per-intersection fan-out; defaults to
    /// the available parallelism.
    pub workers: Option<usize>,
}

impl Config {
    pub fn from_json(text: &str, path: &Path) -> Result<Config, ConfigError> {
        let cfg: Config =
            serde_json::from_str(text).map_err(|source| ConfigError::Parse { path: path.to_path_buf(), source })?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads `explicit`, else the file named by `TRAFFICLENS_CONFIG`, else
    /// returns defaults. A named file that does not exist is an error.
    pub fn load(explicit: Option<&Path>) -> Result<Config, ConfigError> {
        let env = std::env::var_os(CONFIG_ENV).filter(|v| !v.is_empty()).map(PathBuf::from);
        match explicit.map(Path::to_path_buf).or(env) {
            Some(path) => {
                let text =
                    std::fs::read_to_string(&path).map_err(|source| ConfigError::Io { path: path.clone(), source })?;
                Config::from_json(&text, &path)
            }
            None => Ok(Config::default()),
        }
    }

    pub fn workers(&self) -> usize {
        self.workers.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let a = &self.analysis;
        let positive = [
            ("masks.half_width", self.masks.half_width),
            ("masks.radius", self.masks.radius),
            ("ingest.min_journey_duration_s", self.ingest.min_journey_duration_s),
            ("ingest.min_fragment_length_m", self.ingest.min_fragment_length_m),
            ("analysis.stop_speed_mps", a.stop_speed_mps),
            ("analysis.min_stop_s", a.min_stop_s),
            ("analysis.queue_min_stop_s", a.queue_min_stop_s),
            ("analysis.braking_g", a.braking_g),
            ("analysis.braking_sustain_s", a.braking_sustain_s),
            ("analysis.gap_threshold_s", a.gap_threshold_s),
            ("detect.contamination", self.detect.contamination),
            ("detect.deviation_threshold", self.detect.deviation_threshold),
            ("detect.bin_s", self.detect.bin_s),
            ("backend.timeout_s", self.backend.timeout_s),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(ConfigError::Invalid(format!("{name} must be positive, got {v}")));
            }
        }
        if self.detect.k < 2 {
            return Err(ConfigError::Invalid("detect.k must be at least 2".into()));
        }
        if self.detect.contamination > 0.5 {
            return Err(ConfigError::Invalid("detect.contamination must not exceed 0.5".into()));
        }
        if self.detect.features.is_empty() {
            return Err(ConfigError::Invalid("detect.features must not be empty".into()));
        }
        if self.workers == Some(0) {
            return Err(ConfigError::Invalid("workers must be at least 1".into()));
        }
        Ok(())
    }
}
