use std::collections::BTreeMap;

use proptest::prelude::*;

use trafficlens::signal::{compile_plan, PhaseSpec, RingBarrierPlan};
use trafficlens::simkit::{
    parse_tripinfo, run_toy_sim, sample_routes, write_routes_xml, ArrivalProcess, Demand, IntersectionControl, Network,
    SpeedFactorModel, ToyParams,
};

fn controls(network: &Network, offset: f64) -> BTreeMap<String, IntersectionControl> {
    let plan = RingBarrierPlan::new(
        (1..=8).map(|p| PhaseSpec::new(p, 8.0, 50.0)).collect(),
        vec![14.0, 40.0, 14.0, 28.0, 14.0, 40.0, 14.0, 28.0],
        120.0,
    );
    let timeline = compile_plan(&plan).unwrap();
    network.intersections.iter().map(|id| (id.clone(), IntersectionControl { timeline: timeline.clone(), offset })).collect()
}

fn demand(counts: &[(&str, u64)]) -> Demand {
    Demand { counts: counts.iter().map(|(k, v)| (k.to_string(), *v)).collect(), approaches: BTreeMap::new() }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn conservation_and_nonnegative_delay(
        n in 1usize..4, through in 0u64..200, left in 0u64..60, cross in 0u64..120, seed in 0u64..1000,
        horizon_end in 300.0..2000.0f64, offset in 0.0..120.0f64,
    ) {
        let network = Network::corridor(n, 300.0, 200.0, 14.0, Some(5));
        let d = demand(&[("EB-through", through), ("I1:EB-left", left), ("I1:NB-through", cross)]);
        let speed = SpeedFactorModel { mean: 1.0, std: 0.15 };
        let vehicles = sample_routes(&d, &network, (0.0, 300.0), &speed, seed, ArrivalProcess::Uniform).unwrap();
        let r = run_toy_sim("p", &network, &controls(&network, offset), &vehicles, &ToyParams { horizon_end, ..Default::default() }).unwrap();
        let a = &r.aggregates;
        prop_assert_eq!(a.injected, vehicles.len());
        prop_assert_eq!(a.injected, a.throughput + a.incomplete);
        for v in &r.vehicles {
            prop_assert!(v.delay >= -1e-9);
            if let Some(tt) = v.travel_time {
                prop_assert!(tt >= v.delay - 1e-9);
                prop_assert!(v.arrive.unwrap() <= horizon_end);
            }
        }
    }

    #[test]
    fn single_route_is_first_in_first_out(count in 1u64..120, seed in 0u64..1000) {
        let network = Network::single_intersection("I1", 250.0, 13.0, Some(6));
        let d = demand(&[("NB-through", count)]);
        let vehicles = sample_routes(&d, &network, (0.0, 600.0), &SpeedFactorModel::default(), seed, ArrivalProcess::Uniform).unwrap();
        let r = run_toy_sim("fifo", &network, &controls(&network, 0.0), &vehicles, &ToyParams::default()).unwrap();
        let depart_order: Vec<&str> = vehicles.iter().map(|v| v.id.as_str()).collect();
        let mut done: Vec<_> = r.vehicles.iter().filter(|v| v.arrive.is_some()).collect();
        done.sort_by(|a, b| a.arrive.unwrap().total_cmp(&b.arrive.unwrap()).then(a.depart.total_cmp(&b.depart)));
        let arrive_order: Vec<&str> = done.iter().map(|v| v.id.as_str()).collect();
        prop_assert_eq!(arrive_order, depart_order);
        for w in done.windows(2) {
            prop_assert!(w[1].arrive.unwrap() - w[0].arrive.unwrap() >= -1e-9);
        }
    }

    #[test]
    fn later_arrivals_leave_earlier_delays_unchanged(base in 1u64..80, extra in 1u64..80, seed in 0u64..1000) {
        let network = Network::single_intersection("I1", 250.0, 13.0, None);
        let speed = SpeedFactorModel::default();
        let few = sample_routes(&demand(&[("WB-through", base)]), &network, (0.0, 300.0), &speed, seed, ArrivalProcess::Uniform).unwrap();
        let mut more = few.clone();
        let late = sample_routes(&demand(&[("WB-through", extra)]), &network, (300.0, 600.0), &speed, seed + 1, ArrivalProcess::Uniform).unwrap();
        more.extend(late.into_iter().map(|mut v| { v.id = format!("late-{}", v.id); v }));
        let c = controls(&network, 0.0);
        let a = run_toy_sim("a", &network, &c, &few, &ToyParams::default()).unwrap();
        let b = run_toy_sim("b", &network, &c, &more, &ToyParams::default()).unwrap();
        let by_id: BTreeMap<&str, f64> = b.vehicles.iter().map(|v| (v.id.as_str(), v.delay)).collect();
        for v in &a.vehicles {
            prop_assert!((by_id[v.id.as_str()] - v.delay).abs() < 1e-9);
        }
    }
}

#[test]
fn sampling_ignores_map_construction_order() {
    let network = Network::single_intersection("I1", 250.0, 13.0, None);
    let speed = SpeedFactorModel { mean: 1.0, std: 0.1 };
    let mut a = Demand::default();
    let mut b = Demand::default();
    let cells = [("NB-through", 10), ("SB-left", 4), ("EB-right", 7)];
    for (k, v) in cells {
        a.counts.insert(k.into(), v);
    }
    for (k, v) in cells.iter().rev() {
        b.counts.insert(k.to_string(), *v);
    }
    let va = sample_routes(&a, &network, (0.0, 900.0), &speed, 3, ArrivalProcess::Uniform).unwrap();
    let vb = sample_routes(&b, &network, (0.0, 900.0), &speed, 3, ArrivalProcess::Uniform).unwrap();
    assert_eq!(va, vb);
}

#[test]
fn routes_document_lists_every_vehicle() {
    let network = Network::single_intersection("I1", 250.0, 13.0, None);
    let d = demand(&[("NB-through", 3), ("EB-left", 2)]);
    let vehicles = sample_routes(&d, &network, (0.0, 60.0), &SpeedFactorModel::default(), 1, ArrivalProcess::Uniform).unwrap();
    let xml = write_routes_xml(&network, &vehicles);
    for v in &vehicles {
        assert!(xml.contains(&format!("id=\"{}\"", v.id)), "{}", v.id);
    }
    let trips = parse_tripinfo(r#"<tripinfos><tripinfo id="x" depart="1.5" arrival="31.5" duration="30.0"/></tripinfos>"#).unwrap();
    assert_eq!(trips[0].travel_time, Some(30.0));
}
