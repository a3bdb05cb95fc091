//! Expands a grid of cycle lengths and split weights and runs it on a
//! worker pool, then picks the best scenario.

use trafficlens::orchestrate::{expand_grid, run_parallel, select_best, Metric, ParameterGrid, SweepOutput, ToyBackend};
use trafficlens::synth::{synth_network, NetworkKind, NetworkSynth};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let network = synth_network(&NetworkSynth { kind: NetworkKind::Corridor, intersections: 3, ..Default::default() })?;
    let grid: ParameterGrid = serde_json::from_value(serde_json::json!({
        "demand": {"counts": {"EB-through": 120, "WB-through": 110, "I2:NB-through": 40, "I2:SB-through": 40}},
        "horizon": [0.0, 900.0],
        "toy": {"horizon_end": 2400.0},
        "axes": {
            "cycle_length": [80.0, 100.0, 120.0],
            "splits": [{"weights": [1, 3, 1, 2, 1, 3, 1, 2]}, {"weights": [1, 4, 1, 1, 1, 4, 1, 1]}],
            "offset": [0.0, 25.0]
        }
    }))?;
    let expansion = expand_grid(&grid)?;
    println!("{} scenarios, {} excluded", expansion.scenarios.len(), expansion.excluded.len());

    let workers = std::thread::available_parallelism().map_or(1, |n| n.get());
    let backend = ToyBackend { params: grid.toy };
    let result = run_parallel(&expansion.scenarios, &network, workers, &backend, &SweepOutput::default())?;
    for row in &result.rows {
        let tt = row.aggregates.as_ref().and_then(|a| a.mean_corridor_travel_time).unwrap_or(f64::NAN);
        println!("{} {:>7.1} s  {}", row.scenario_id, tt, serde_json::to_string(&row.axis_values)?);
    }
    let best = select_best(&result, Metric::MeanCorridorTravelTime)?;
    println!("best for corridor travel time: {}", best.scenario_id);
    Ok(())
}
