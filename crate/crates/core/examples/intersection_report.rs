//! One hour of generated signalized traffic analysed at its intersection
//! and compared with the generator's ground truth.

use trafficlens::analytics::{analyze_intersection, AnalysisOptions};
use trafficlens::ingest::{clip_to_masks, filter_journeys};
use trafficlens::masks::{Direction, MaskSet};
use trafficlens::synth::{synth_trajectories, TrajectorySynth};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let params = TrajectorySynth { braking_injections: 8, ..Default::default() };
    let synth = synth_trajectories(&params)?;
    let masks = MaskSet::build(&synth.raw_features(params.leg_length), 35.0, 125.0)?;
    let journeys = filter_journeys(synth.journeys_in(masks.projection())?, 120.0);
    let fragments = clip_to_masks(&journeys, &masks, 150.0);
    let mask = masks.intersection("I1").expect("intersection mask");
    let report = analyze_intersection(&fragments, mask, None, &AnalysisOptions::default());
    let truth = &synth.truth;

    println!("O-D counts (measured / truth), rows are origins");
    for o in Direction::ALL {
        let cells: Vec<String> =
            Direction::ALL.iter().map(|&d| format!("{:>3}/{:<3}", report.od.get(o, d), truth.od.get(o, d))).collect();
        println!("  {o}  {}", cells.join(" "));
    }
    println!("queue position by approach (measured mu, sigma | truth mu, sigma)");
    for (m, t) in report.queues.iter().zip(&truth.queues) {
        println!("  {}  {:6.2} {:6.2} | {:6.2} {:6.2}  n={}", m.approach, m.mu, m.sigma, t.mu, t.sigma, m.n);
    }
    let injected: usize = truth.journeys.iter().map(|j| j.braking.len()).sum();
    println!("hard braking: {} detected, {injected} injected", report.braking.len());

    let out = std::env::temp_dir().join("trafficlens-report-example");
    let dir = report.write_bundle(&out, true)?;
    println!("report bundle written to {}", dir.display());
    Ok(())
}
