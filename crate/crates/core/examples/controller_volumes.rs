//! Detector actuation counts per phase compared with prior weeks.

use std::collections::BTreeMap;

use trafficlens::detect::{atspm_interruption, RelativeDeviation};
use trafficlens::ingest::{phase_volumes, DETECTOR_ON};
use trafficlens::synth::{synth_atspm, AtspmSynth};
use trafficlens::window::WEEK_S;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let start = 1_709_625_600.0;
    let hourly = |through: u64| AtspmSynth {
        seed: through,
        intersection_id: "I1".into(),
        start,
        bin_s: 3600.0,
        volumes: BTreeMap::from([(2, vec![through]), (4, vec![80]), (6, vec![through]), (8, vec![75])]),
        lanes: 2,
    };
    // phase 2 and 6 volumes collapse in the current week
    let current = synth_atspm(&hourly(120))?;
    let map = current.detector_map.clone();
    let now = phase_volumes(&current.events, &map, 3600.0, DETECTOR_ON)?;

    let mut baselines = Vec::new();
    for k in 1..=2i64 {
        let week = synth_atspm(&AtspmSynth { start: start - k as f64 * WEEK_S, ..hourly(300) })?;
        let v = phase_volumes(&week.events, &map, 3600.0, DETECTOR_ON)?;
        baselines.push(v.shifted(k * WEEK_S as i64));
    }
    let refs: Vec<_> = baselines.iter().collect();
    let det = atspm_interruption("I1", &now, &refs, &RelativeDeviation::default());
    for d in &det.deviations {
        println!(
            "phase {} current {:>4} baseline {:>6.1} score {:>6.3}{}",
            d.phase,
            d.current,
            d.baseline_mean,
            d.score,
            if d.flagged { "  FLAG" } else { "" }
        );
    }
    Ok(())
}
