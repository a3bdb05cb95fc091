use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::ingest::PhaseVolumes;

pub const DEFAULT_DEVIATION_THRESHOLD: f64 = 0.4;

/// Scores a current count against its baseline mean.
pub trait PhaseComparator: Sync {
    fn name(&self) -> &str;
    fn score(&self, current: f64, baseline_mean: f64) -> f64;
    fn is_flagged(&self, score: f64) -> bool;
}

/// `(current − baseline) / max(1, baseline)`, flagged at `|score| ≥ threshold`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RelativeDeviation {
    pub threshold: f64,
}

impl Default for RelativeDeviation {
    fn default() -> Self {
        Self { threshold: DEFAULT_DEVIATION_THRESHOLD }
    }
}

impl PhaseComparator for RelativeDeviation {
    fn name(&self) -> &str {
        "relative_deviation"
    }

    fn score(&self, current: f64, baseline_mean: f64) -> f64 {
        (current - baseline_mean) / baseline_mean.max(1.0)
    }

    fn is_flagged(&self, score: f64) -> bool {
        score.abs() >= self.threshold
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseDeviation {
    pub intersection_id: String,
    pub phase: u32,
    pub hour: i64,
    pub current: u64,
    pub baseline_mean: f64,
    pub score: f64,
    pub flagged: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AtspmDetection {
    pub deviations: Vec<PhaseDeviation>,
    /// (phase, hour) cells seen currently but in no baseline.
    pub no_baseline: Vec<(u32, i64)>,
}

impl AtspmDetection {
    pub fn flagged(&self) -> impl Iterator<Item = &PhaseDeviation> {
        self.deviations.iter().filter(|d| d.flagged)
    }
}

/// Compares each (phase, bin) of `current` with the same cell in the
/// baseline tables, which must already be aligned to the current bins
/// (see [`PhaseVolumes::shifted`]).
///
/// A cell missing from a baseline table means that week has no data for it,
/// so the mean is taken over the tables that have it. A cell missing from
/// the current table while present in a baseline counts as zero.
pub fn atspm_interruption(
    intersection_id: &str,
    current: &PhaseVolumes,
    baselines: &[&PhaseVolumes],
    comparator: &dyn PhaseComparator,
) -> AtspmDetection {
    let keys: BTreeSet<(u32, i64)> =
        current.counts.keys().chain(baselines.iter().flat_map(|b| b.counts.keys())).copied().collect();
    let mut out = AtspmDetection::default();
    for (phase, hour) in keys {
        let cur = current.counts.get(&(phase, hour)).copied().unwrap_or(0);
        let seen: Vec<u64> = baselines.iter().filter_map(|b| b.counts.get(&(phase, hour)).copied()).collect();
        if seen.is_empty() {
            out.no_baseline.push((phase, hour));
            continue;
        }
        let baseline_mean = seen.iter().sum::<u64>() as f64 / seen.len() as f64;
        let score = comparator.score(cur as f64, baseline_mean);
        out.deviations.push(PhaseDeviation {
            intersection_id: intersection_id.to_string(),
            phase,
            hour,
            current: cur,
            baseline_mean,
            score,
            flagged: comparator.is_flagged(score),
        });
    }
    out
}

impl PhaseVolumes {
    /// Same counts with every bin moved by `seconds`.
    pub fn shifted(&self, seconds: i64) -> PhaseVolumes {
        PhaseVolumes {
            counts: self.counts.iter().map(|(&(p, h), &c)| ((p, h + seconds), c)).collect(),
            unmapped: self.unmapped.iter().map(|(&h, &c)| (h + seconds, c)).collect(),
        }
    }
}
