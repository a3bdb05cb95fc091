//! Interruption detection: angle-based outlier scoring of trajectory
//! features against same-hour baselines one and two weeks earlier, and
//! phase-volume deviation on controller detector counts.

mod abod;
mod atspm;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use abod::{abof_scores, flag_outliers, OutlierScore, DEFAULT_K};
pub use atspm::{
    atspm_interruption, AtspmDetection, PhaseComparator, PhaseDeviation, RelativeDeviation,
    DEFAULT_DEVIATION_THRESHOLD,
};

use crate::analytics::{detect_stops, DEFAULT_MIN_STOP_S, DEFAULT_STOP_SPEED_MPS};
use crate::trajectory::Journey;
use crate::window::TimeWindow;

pub const DEFAULT_CONTAMINATION: f64 = 0.1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DetectError {
    #[error("journey {0:?} needs at least two samples")]
    TooFewSamples(String),
    #[error("journey {0:?} has a non-finite feature")]
    NonFinite(String),
    #[error("need at least {need} vectors, got {got}")]
    TooFewVectors { need: usize, got: usize },
    #[error("k must be at least 2, got {0}")]
    BadK(usize),
    #[error("point {0} has no neighbour pair with non-zero distances")]
    AllPairsDegenerate(usize),
    #[error("contamination must lie in (0, 0.5), got {0}")]
    BadContamination(f64),
    #[error("vectors have inconsistent dimensions")]
    DimensionMismatch,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Cohort {
    Current,
    WeekMinus1,
    WeekMinus2,
}

impl Cohort {
    /// How many weeks before the analysed window this cohort was recorded.
    pub fn weeks_back(self) -> u32 {
        match self {
            Cohort::Current => 0,
            Cohort::WeekMinus1 => 1,
            Cohort::WeekMinus2 => 2,
        }
    }

    /// The same hour-of-week window for this cohort.
    pub fn window(self, current: &TimeWindow) -> TimeWindow {
        current.shifted(-(self.weeks_back() as f64) * crate::window::WEEK_S)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Feature {
    StoppedTime,
    AvgSpeed,
    SpeedStd,
    TravelTime,
}

impl Feature {
    pub const ALL: [Feature; 4] = [Feature::StoppedTime, Feature::AvgSpeed, Feature::SpeedStd, Feature::TravelTime];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub journey_id: String,
    pub cohort: Cohort,
    pub stopped_time: f64,
    pub avg_speed: f64,
    pub speed_std: f64,
    pub travel_time: f64,
}

impl FeatureVector {
    pub fn get(&self, f: Feature) -> f64 {
        match f {
            Feature::StoppedTime => self.stopped_time,
            Feature::AvgSpeed => self.avg_speed,
            Feature::SpeedStd => self.speed_std,
            Feature::TravelTime => self.travel_time,
        }
    }

    pub fn values(&self, features: &[Feature]) -> Vec<f64> {
        features.iter().map(|&f| self.get(f)).collect()
    }
}

/// Stopped time (analytics stop rule), mean and population standard
/// deviation of sample speeds, and time span of a fragment.
pub fn featurize(fragment: &Journey, cohort: Cohort) -> Result<FeatureVector, DetectError> {
    let n = fragment.samples.len();
    if n < 2 {
        return Err(DetectError::TooFewSamples(fragment.id.clone()));
    }
    let speeds: Vec<f64> = fragment.samples.iter().map(|s| s.speed_or_zero()).collect();
    let mean = speeds.iter().sum::<f64>() / n as f64;
    let var = speeds.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
    let stopped: f64 = detect_stops(fragment, DEFAULT_STOP_SPEED_MPS, DEFAULT_MIN_STOP_S).iter().map(|s| s.duration).sum();
    let fv = FeatureVector {
        journey_id: fragment.id.clone(),
        cohort,
        stopped_time: stopped,
        avg_speed: mean,
        speed_std: var.sqrt(),
        travel_time: fragment.duration(),
    };
    if Feature::ALL.iter().any(|&f| !fv.get(f).is_finite()) {
        return Err(DetectError::NonFinite(fragment.id.clone()));
    }
    Ok(fv)
}

/// Which vectors supply the z-score mean and deviation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormalizeStats {
    /// Current and baseline cohorts together.
    #[default]
    Pooled,
    /// Baseline cohorts only.
    BaselineOnly,
}

/// Per-feature z-scores with population standard deviation. A feature with
/// zero spread maps to 0 everywhere.
pub fn normalize(
    vectors: &[FeatureVector],
    features: &[Feature],
    stats: NormalizeStats,
) -> Result<Vec<Vec<f64>>, DetectError> {
    let reference: Vec<&FeatureVector> = match stats {
        NormalizeStats::Pooled => vectors.iter().collect(),
        NormalizeStats::BaselineOnly => vectors.iter().filter(|v| v.cohort != Cohort::Current).collect(),
    };
    if reference.len() < 2 {
        return Err(DetectError::TooFewVectors { need: 2, got: reference.len() });
    }
    let m = reference.len() as f64;
    let params: Vec<(f64, f64)> = features
        .iter()
        .map(|&f| {
            let mean = reference.iter().map(|v| v.get(f)).sum::<f64>() / m;
            let var = reference.iter().map(|v| (v.get(f) - mean).powi(2)).sum::<f64>() / m;
            (mean, var.sqrt())
        })
        .collect();
    Ok(vectors
        .iter()
        .map(|v| {
            features
                .iter()
                .zip(&params)
                .map(|(&f, &(mean, sd))| if sd > 0.0 { (v.get(f) - mean) / sd } else { 0.0 })
                .collect()
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbodParams {
    pub k: usize,
    pub contamination: f64,
    pub features: Vec<Feature>,
    pub stats: NormalizeStats,
}

impl Default for AbodParams {
    fn default() -> Self {
        Self { k: DEFAULT_K, contamination: DEFAULT_CONTAMINATION, features: Feature::ALL.to_vec(), stats: NormalizeStats::Pooled }
    }
}

/// Serialized detector result for one intersection and window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorOutput {
    pub intersection: String,
    pub window: Option<TimeWindow>,
    pub method: String,
    pub flags: Vec<String>,
    pub scores: serde_json::Value,
    pub params: serde_json::Value,
    /// Share of current-cohort items flagged; the cell value of an
    /// interruption-likelihood map.
    pub interruption_probability: f64,
}

/// Featurizes, normalizes, scores and flags one intersection's fragments.
/// Fragments that cannot be featurized are skipped with a warning.
pub fn detect_trajectory_outliers(
    intersection: &str,
    window: Option<&TimeWindow>,
    cohorts: &[(Cohort, Vec<Journey>)],
    params: &AbodParams,
) -> Result<(DetectorOutput, Vec<OutlierScore>), DetectError> {
    let mut vectors = Vec::new();
    for (cohort, journeys) in cohorts {
        for j in journeys {
            match featurize(j, *cohort) {
                Ok(v) => vectors.push(v),
                Err(e) => log::warn!("{intersection}: skipping {}: {e}", j.id),
            }
        }
    }
    vectors.sort_by(|a, b| (a.cohort, &a.journey_id).cmp(&(b.cohort, &b.journey_id)));
    let points = normalize(&vectors, &params.features, params.stats)?;
    let abof = abof_scores(&points, params.k)?;
    let mut scores: Vec<OutlierScore> = vectors
        .iter()
        .zip(abof)
        .map(|(v, a)| OutlierScore { journey_id: v.journey_id.clone(), cohort: v.cohort, abof: a, flagged: false })
        .collect();
    flag_outliers(&mut scores, params.contamination)?;
    let n_current = scores.iter().filter(|s| s.cohort == Cohort::Current).count();
    let flags: Vec<String> = scores.iter().filter(|s| s.flagged).map(|s| s.journey_id.clone()).collect();
    let out = DetectorOutput {
        intersection: intersection.to_string(),
        window: window.copied(),
        method: "abod".into(),
        interruption_probability: if n_current > 0 { flags.len() as f64 / n_current as f64 } else { 0.0 },
        flags,
        scores: serde_json::to_value(&scores).expect("scores serialize"),
        params: serde_json::to_value(params).expect("params serialize"),
    };
    Ok((out, scores))
}
