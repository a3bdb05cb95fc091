//! Deterministic queue-discharge simulation of one intersection under a
//! fixed-time plan.

use std::collections::BTreeMap;

use trafficlens::signal::{compile_plan, PhaseSpec, RingBarrierPlan};
use trafficlens::simkit::{
    run_toy_sim, sample_routes, ArrivalProcess, Demand, IntersectionControl, Network, SpeedFactorModel, ToyParams,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let network = Network::single_intersection("I1", 300.0, 15.0, Some(6));
    let plan = RingBarrierPlan::new(
        (1..=8).map(|p| PhaseSpec::new(p, 8.0, 50.0)).collect(),
        vec![14.0, 40.0, 14.0, 28.0, 14.0, 40.0, 14.0, 28.0],
        120.0,
    );
    let controls = BTreeMap::from([("I1".to_string(), IntersectionControl { timeline: compile_plan(&plan)?, offset: 0.0 })]);

    let counts = BTreeMap::from([
        ("EB-through".to_string(), 300),
        ("WB-through".to_string(), 280),
        ("NB-through".to_string(), 150),
        ("SB-left".to_string(), 60),
    ]);
    let demand = Demand { counts, approaches: BTreeMap::new() };
    let speed = SpeedFactorModel { mean: 1.0, std: 0.1 };
    let vehicles = sample_routes(&demand, &network, (0.0, 3600.0), &speed, 7, ArrivalProcess::Uniform)?;

    let result = run_toy_sim("example", &network, &controls, &vehicles, &ToyParams { horizon_end: 4200.0, ..Default::default() })?;
    let a = &result.aggregates;
    println!("injected {} completed {} incomplete {}", a.injected, a.throughput, a.incomplete);
    println!("mean travel time {:.1} s, mean delay {:.1} s", a.mean_travel_time.unwrap_or(f64::NAN), a.mean_delay.unwrap_or(f64::NAN));
    for (approach, delay) in &a.mean_delay_by_approach {
        println!("  {approach:<8} {delay:>6.1} s");
    }
    Ok(())
}
