//! Loads raw trajectory rows, applies the duration and ignition filters,
//! clips to masks and persists fragments in the partitioned store.

use trafficlens::ingest::{clip_to_masks, filter_journeys, load_trajectories, JourneyStore};
use trafficlens::masks::MaskSet;
use trafficlens::synth::{synth_trajectories, TrajectorySynth};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::env::temp_dir().join("trafficlens-ingest-example");
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir)?;

    let params = TrajectorySynth { duration_s: 900.0, ..Default::default() };
    let synth = synth_trajectories(&params)?;
    let csv_path = dir.join("trajectories.csv");
    let mut w = csv::Writer::from_path(&csv_path)?;
    for row in synth.rows() {
        w.serialize(row)?;
    }
    w.flush()?;

    let masks = MaskSet::build(&synth.raw_features(params.leg_length), 35.0, 125.0)?;
    let loaded = load_trajectories(&[csv_path], masks.projection())?;
    println!("{} journeys, {} rejected rows", loaded.journeys.len(), loaded.rejects.len());

    let kept = filter_journeys(loaded.journeys, 120.0);
    let fragments = clip_to_masks(&kept, &masks, 150.0);
    println!("{} journeys kept, {} fragments", kept.len(), fragments.len());

    let store = JourneyStore::open(dir.join("store"), *masks.projection())?;
    store.write(&fragments, Some(&masks))?;
    for p in store.manifest()?.map(|m| m.partitions).unwrap_or_default() {
        println!("  {:<45} {:>5} fragments", p.path, p.journeys);
    }
    let at_i1 = store.load(Some("I1"), None)?;
    println!("{} fragments stored for I1", at_i1.len());
    Ok(())
}
