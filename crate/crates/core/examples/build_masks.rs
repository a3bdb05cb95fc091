//! Builds corridor and intersection masks from road centerlines and
//! intersection points, then round-trips them through GeoJSON.

use trafficlens::masks::{MaskKind, MaskSet};
use trafficlens::synth::{synth_trajectories, TrajectorySynth};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    // a generated intersection supplies the road geometry
    let params = TrajectorySynth { duration_s: 300.0, ..Default::default() };
    let synth = synth_trajectories(&params)?;
    let features = synth.raw_features(params.leg_length);

    let masks = MaskSet::build(&features, 35.0, 125.0)?;
    println!(
        "{} corridor masks, {} intersection masks",
        masks.count(MaskKind::Corridor),
        masks.count(MaskKind::Intersection)
    );
    for m in masks.masks() {
        println!("  {:<12} {:?} area {:>9.0} m2", m.id, m.kind, m.area());
    }
    let disc = masks.intersection("I1").expect("intersection mask");
    for a in &disc.approaches {
        println!("  approach {} stop bar at ({:.1}, {:.1})", a.direction, a.stop_bar.x, a.stop_bar.y);
    }

    let text = serde_json::to_string(&masks.to_geojson())?;
    let back = MaskSet::from_geojson(&text)?;
    println!("GeoJSON round trip keeps {} masks ({} bytes)", back.masks().len(), text.len());
    Ok(())
}
