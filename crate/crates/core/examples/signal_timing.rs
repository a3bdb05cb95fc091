//! A dual-ring, eight-phase plan: validation, compilation to a cyclic state
//! timeline and export as a simulator traffic-light program.

use trafficlens::signal::{
    compile_plan, default_head_map, emit_tls_program, parse_tls_program, validate_plan, PhaseSpec, RingBarrierPlan,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let phases: Vec<PhaseSpec> = (1..=8).map(|p| PhaseSpec::new(p, 8.0, 50.0)).collect();
    let plan = RingBarrierPlan::new(phases.clone(), vec![14.0, 40.0, 14.0, 28.0, 14.0, 40.0, 14.0, 28.0], 120.0);
    validate_plan(&plan).map_err(|v| format!("{v:?}"))?;

    let timeline = compile_plan(&plan)?;
    for iv in &timeline.intervals {
        println!("{:>6.1} s for {:>4.1} s  green {:?}", iv.start, iv.duration, iv.greens());
    }
    println!("phase 2 green windows {:?}", timeline.green_windows(2));
    println!("states at t = 130 s: {:?}", timeline.state_at(130.0));

    let xml = emit_tls_program(&timeline, &default_head_map(), "I1", "0", 0.0)?;
    let parsed = parse_tls_program(&xml)?;
    println!("program with {} phases:\n{xml}", parsed.len());

    let broken = RingBarrierPlan::new(phases, vec![14.0, 40.0, 14.0, 28.0, 20.0, 34.0, 14.0, 20.0], 120.0);
    if let Err(violations) = validate_plan(&broken) {
        for v in violations {
            println!("rejected: {v:?}");
        }
    }
    Ok(())
}
