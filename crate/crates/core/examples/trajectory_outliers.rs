//! Angle-based outlier detection: current-hour fragments scored against the
//! same hour one and two weeks earlier, with a few blocked vehicles injected.

use trafficlens::detect::{detect_trajectory_outliers, AbodParams, Cohort};
use trafficlens::ingest::{clip_to_masks, Journey};
use trafficlens::masks::MaskSet;
use trafficlens::synth::{synth_trajectories, TrajectorySynth};
use trafficlens::window::WEEK_S;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let base = TrajectorySynth { duration_s: 1800.0, ..Default::default() };
    let current = synth_trajectories(&TrajectorySynth { blockage_injections: 4, ..base.clone() })?;
    let masks = MaskSet::build(&current.raw_features(base.leg_length), 35.0, 125.0)?;

    let at_intersection = |journeys: Vec<Journey>| -> Vec<Journey> {
        clip_to_masks(&journeys, &masks, 150.0).into_iter().filter(|f| f.mask_id.as_deref() == Some("I1")).collect()
    };
    let mut cohorts = vec![(Cohort::Current, at_intersection(current.journeys_in(masks.projection())?))];
    for (k, cohort) in [(1u32, Cohort::WeekMinus1), (2, Cohort::WeekMinus2)] {
        let week = TrajectorySynth {
            seed: base.seed + u64::from(k),
            start: base.start - f64::from(k) * WEEK_S,
            id_prefix: format!("w{k}-"),
            ..base.clone()
        };
        cohorts.push((cohort, at_intersection(synth_trajectories(&week)?.journeys_in(masks.projection())?)));
    }

    let n_current = cohorts[0].1.len();
    let params = AbodParams { contamination: 4.0 / n_current as f64, ..Default::default() };
    let (output, scores) = detect_trajectory_outliers("I1", Some(&current.truth.window), &cohorts, &params)?;

    let blocked: Vec<&str> = current.truth.journeys.iter().filter(|j| j.blocked).map(|j| j.id.as_str()).collect();
    println!("{} vectors scored, {} current", scores.len(), n_current);
    println!("injected blockages: {blocked:?}");
    println!("flagged:            {:?}", output.flags);
    println!("interruption probability {:.4}", output.interruption_probability);
    Ok(())
}
