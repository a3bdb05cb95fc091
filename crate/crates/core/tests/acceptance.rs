//! One PASS/FAIL line per acceptance criterion. Set ACCEPTANCE_STRICT to
//! exit nonzero when any criterion fails.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::time::{Duration, Instant};

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use trafficlens::analytics::{analyze_intersection, AnalysisOptions};
use trafficlens::cli;
use trafficlens::detect::abof_scores;
use trafficlens::geo::geojson::RawFeatures;
use trafficlens::geo::{
    buffer_circle, buffer_polyline, clip_difference, point_in_polygon, GeoPoint, PlanarPoint, Polygon, Polyline,
    Projection,
};
use trafficlens::ingest::{clip_to_masks, filter_journeys, load_trajectories, Ignition, TrajectoryRow};
use trafficlens::masks::{Direction, MaskSet};
use trafficlens::orchestrate::{
    expand_grid, run_parallel, select_best, Backend, Metric, ParameterGrid, ScenarioSpec, SweepOutput, SweepResult,
    ToyBackend,
};
use trafficlens::signal::{
    barrier_of, compile_plan, ring_of, validate_plan, PhaseSpec, PhaseState, RingBarrierPlan, Violation,
};
use trafficlens::simkit::{
    largest_remainder, run_toy_sim, sample_routes, ApproachDemand, ArrivalProcess, Demand, IntersectionControl, Network,
    RunResult, SimError, SpeedFactorModel, ToyParams, VehicleSpec,
};
use trafficlens::synth::{synth_trajectories, Truth, TrajectorySynth};

struct Outcome {
    pass: bool,
    detail: String,
}

type Criterion = (&'static str, fn() -> Outcome);
type ViolationCase = (&'static str, RingBarrierPlan, fn(&Violation) -> bool);

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn main() {
    let criteria: Vec<Criterion> = vec![
        ("geometry oracle suite", geometry_oracles),
        ("preprocessing thresholds", preprocessing_thresholds),
        ("closed-loop analytics", closed_loop_analytics),
        ("ABOD correctness", abod_correctness),
        ("interruption detection end-to-end", interruption_detection),
        ("signal model", signal_model),
        ("route sampling exactness", route_sampling),
        ("toy-sim sanity", toy_sim_sanity),
        ("sweep determinism and parallelism", sweep_determinism),
        ("grid-search optimum", grid_optimum),
    ];
    let total = criteria.len();
    let mut failed = 0;
    for (name, f) in criteria {
        let t0 = Instant::now();
        let o = match std::panic::catch_unwind(f) {
            Ok(o) => o,
            Err(e) => {
                let msg = e
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_default();
                outcome(false, format!("panicked: {msg}"))
            }
        };
        if !o.pass {
            failed += 1;
        }
        println!(
            "{} {name}: {} ({:.1} s)",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail,
            t0.elapsed().as_secs_f64()
        );
    }
    println!("{failed} of {total} criteria failed");
    if failed > 0 && std::env::var_os("ACCEPTANCE_STRICT").is_some() {
        std::process::exit(1);
    }
}

// ---------------------------------------------------------------- geometry

fn seg_dist(p: PlanarPoint, a: PlanarPoint, b: PlanarPoint) -> f64 {
    let (dx, dy) = (b.x - a.x, b.y - a.y);
    let l2 = dx * dx + dy * dy;
    let u = if l2 == 0.0 { 0.0 } else { (((p.x - a.x) * dx + (p.y - a.y) * dy) / l2).clamp(0.0, 1.0) };
    ((p.x - a.x - u * dx).powi(2) + (p.y - a.y - u * dy).powi(2)).sqrt()
}

/// Winding number of a closed ring around `p`.
fn winding(p: PlanarPoint, ring: &[PlanarPoint]) -> i32 {
    let mut w = 0;
    for i in 0..ring.len() {
        let (a, b) = (ring[i], ring[(i + 1) % ring.len()]);
        let cross = (b.x - a.x) * (p.y - a.y) - (p.x - a.x) * (b.y - a.y);
        if a.y <= p.y {
            if b.y > p.y && cross > 0.0 {
                w += 1;
            }
        } else if b.y <= p.y && cross < 0.0 {
            w -= 1;
        }
    }
    w
}

fn ring_distance(p: PlanarPoint, ring: &[PlanarPoint]) -> f64 {
    (0..ring.len()).map(|i| seg_dist(p, ring[i], ring[(i + 1) % ring.len()])).fold(f64::INFINITY, f64::min)
}

fn oracle_inside(p: PlanarPoint, poly: &Polygon) -> bool {
    winding(p, poly.exterior()) != 0 && poly.holes().iter().all(|h| winding(p, h) == 0)
}

fn boundary_distance(p: PlanarPoint, poly: &Polygon) -> f64 {
    poly.rings().map(|r| ring_distance(p, r)).fold(f64::INFINITY, f64::min)
}

fn star_polygon(rng: &mut ChaCha8Rng, center: PlanarPoint, n: usize, r0: f64, r1: f64) -> Polygon {
    let mut angles: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..std::f64::consts::TAU)).collect();
    angles.sort_by(f64::total_cmp);
    angles.dedup_by(|a, b| (*a - *b).abs() < 1e-3);
    let pts = angles
        .iter()
        .map(|a| {
            let r = rng.random_range(r0..r1);
            PlanarPoint::new(center.x + r * a.cos(), center.y + r * a.sin())
        })
        .collect();
    Polygon::new(pts, vec![]).expect("star polygon is simple")
}

fn geometry_oracles() -> Outcome {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let probes = 1000;
    let mut checked = 0usize;
    let mut mismatches = Vec::new();
    let probe = |rng: &mut ChaCha8Rng, lo: f64, hi: f64| PlanarPoint::new(rng.random_range(lo..hi), rng.random_range(lo..hi));

    // circles: inside iff distance to centre <= radius, outside the 0.2% band
    for shape in 0..10 {
        let c = PlanarPoint::new(rng.random_range(-500.0..500.0), rng.random_range(-500.0..500.0));
        let r = rng.random_range(5.0..200.0);
        let poly = buffer_circle(c, r).unwrap();
        for _ in 0..probes {
            let p = probe(&mut rng, -1.0, 1.0);
            let p = PlanarPoint::new(c.x + p.x * 1.3 * r, c.y + p.y * 1.3 * r);
            let d = p.distance(&c);
            if (d - r).abs() <= 0.002 * r {
                continue;
            }
            checked += 1;
            if point_in_polygon(&p, &poly) != (d <= r) {
                mismatches.push(format!("circle {shape} at ({:.3}, {:.3})", p.x, p.y));
            }
        }
    }
    // polyline buffers: inside iff distance to the polyline <= half-width
    for shape in 0..10 {
        let mut v = vec![PlanarPoint::new(0.0, 0.0)];
        for _ in 0..rng.random_range(1..5) {
            let last = *v.last().unwrap();
            let a: f64 = rng.random_range(0.0..std::f64::consts::TAU);
            let len = rng.random_range(50.0..300.0);
            v.push(PlanarPoint::new(last.x + len * a.cos(), last.y + len * a.sin()));
        }
        let w = rng.random_range(5.0..60.0);
        let line = Polyline::new(v.clone()).unwrap();
        let poly = buffer_polyline(&line, w).unwrap();
        let (lo, hi) = v.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
            (lo.min(p.x).min(p.y), hi.max(p.x).max(p.y))
        });
        for _ in 0..probes {
            let p = probe(&mut rng, lo - 1.5 * w, hi + 1.5 * w);
            let d = v.windows(2).map(|s| seg_dist(p, s[0], s[1])).fold(f64::INFINITY, f64::min);
            if (d - w).abs() <= 0.002 * w {
                continue;
            }
            checked += 1;
            if point_in_polygon(&p, &poly) != (d <= w) {
                mismatches.push(format!("buffer {shape} at ({:.3}, {:.3})", p.x, p.y));
            }
        }
    }
    // arbitrary simple polygons against the winding-number scan
    for shape in 0..10 {
        let poly = star_polygon(&mut rng, PlanarPoint::new(0.0, 0.0), 24, 20.0, 100.0);
        for _ in 0..probes {
            let p = probe(&mut rng, -110.0, 110.0);
            if boundary_distance(p, &poly) < 1e-6 {
                continue;
            }
            checked += 1;
            if point_in_polygon(&p, &poly) != oracle_inside(p, &poly) {
                mismatches.push(format!("polygon {shape} at ({:.3}, {:.3})", p.x, p.y));
            }
        }
    }
    // differences: inside the result iff inside the subject and no clip
    for shape in 0..10 {
        let subject = star_polygon(&mut rng, PlanarPoint::new(0.0, 0.0), 16, 60.0, 100.0);
        let clips: Vec<Polygon> = (0..rng.random_range(1..4))
            .map(|_| {
                let c = PlanarPoint::new(rng.random_range(-80.0..80.0), rng.random_range(-80.0..80.0));
                star_polygon(&mut rng, c, 10, 10.0, 50.0)
            })
            .collect();
        let result = clip_difference(&subject, &clips).unwrap();
        for _ in 0..probes {
            let p = probe(&mut rng, -110.0, 110.0);
            let near = std::iter::once(&subject).chain(&clips).chain(&result).any(|q| boundary_distance(p, q) < 1e-6);
            if near {
                continue;
            }
            checked += 1;
            let expected = oracle_inside(p, &subject) && clips.iter().all(|c| !oracle_inside(p, c));
            if result.iter().any(|q| point_in_polygon(&p, q)) != expected {
                mismatches.push(format!("difference {shape} at ({:.3}, {:.3})", p.x, p.y));
            }
        }
    }
    let secs = t0.elapsed().as_secs_f64();
    outcome(
        mismatches.is_empty() && secs < 5.0,
        format!(
            "40 shapes x {probes} probes, {checked} classified outside the band, {} mismatches{}, {secs:.2} s (limit 5 s)",
            mismatches.len(),
            mismatches.first().map(|m| format!(" (first: {m})")).unwrap_or_default()
        ),
    )
}

// ----------------------------------------------------------- preprocessing

fn preprocessing_thresholds() -> Outcome {
    let proj = Projection::new(GeoPoint::new(-81.38, 28.54).unwrap()).unwrap();
    let g = |x: f64, y: f64| proj.unproject(PlanarPoint::new(x, y));
    let features = RawFeatures { lines: vec![vec![g(-600.0, 0.0), g(600.0, 0.0)]], points: vec![("X".into(), g(0.0, 0.0))] };
    let masks = MaskSet::build(&features, 35.0, 125.0).unwrap();

    // journeys drive along the road inside the intersection disc, one sample per second
    let mut rows = Vec::new();
    let mut expected_kept = BTreeSet::new();
    let mut n = 0;
    for duration in [60u32, 119, 120, 121, 300] {
        for length in [100.0, 149.0, 151.0, 200.0, 240.0] {
            for off_after in [None, Some(100u32), Some(200)] {
                let id = format!("d{duration}-l{length}-off{}", off_after.map_or("none".into(), |a| a.to_string()));
                n += 1;
                let mut on_end = duration;
                for k in 0..=duration {
                    let x = -length / 2.0 + length * f64::from(k) / f64::from(duration);
                    let ignition = match off_after {
                        Some(a) if k > a => Ignition::Off,
                        Some(a) => {
                            on_end = on_end.min(a);
                            Ignition::On
                        }
                        None => Ignition::On,
                    };
                    let p = g(x, 0.0);
                    rows.push(TrajectoryRow {
                        journey_id: id.clone(),
                        timestamp: 1_700_000_000.0 + f64::from(k),
                        lat: p.lat,
                        lon: p.lon,
                        speed_mps: Some(length / f64::from(duration)),
                        ignition,
                    });
                }
                let on_duration = f64::from(on_end);
                let on_length = length * on_duration / f64::from(duration);
                if on_duration >= 120.0 && on_length >= 150.0 {
                    expected_kept.insert(id);
                }
            }
        }
    }
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("corpus.csv");
    let mut w = csv::Writer::from_path(&path).unwrap();
    for r in &rows {
        w.serialize(r).unwrap();
    }
    w.flush().unwrap();

    let loaded = load_trajectories(&[path], masks.projection()).unwrap();
    let kept = filter_journeys(loaded.journeys, 120.0);
    let fragments = clip_to_masks(&kept, &masks, 150.0);
    let survivors: BTreeSet<String> = fragments.iter().map(|f| f.id.clone()).collect();
    let false_removals = expected_kept.difference(&survivors).count();
    let missed_removals = survivors.difference(&expected_kept).count();
    outcome(
        false_removals == 0 && missed_removals == 0,
        format!(
            "{n} labeled journeys, {} should survive, {} survived; {false_removals} false removals, {missed_removals} violators kept",
            expected_kept.len(),
            survivors.len()
        ),
    )
}

// ------------------------------------------------------ closed-loop analytics

fn closed_loop_analytics() -> Outcome {
    let t0 = Instant::now();
    let p = TrajectorySynth { braking_injections: 12, ..Default::default() };
    let synth = synth_trajectories(&p).unwrap();
    let truth = &synth.truth;
    let masks = MaskSet::build(&synth.raw_features(p.leg_length), 35.0, 125.0).unwrap();
    let journeys = filter_journeys(synth.journeys_in(masks.projection()).unwrap(), 120.0);
    let fragments = clip_to_masks(&journeys, &masks, 150.0);
    let report = analyze_intersection(&fragments, masks.intersection("I1").unwrap(), None, &AnalysisOptions::default());
    let secs = t0.elapsed().as_secs_f64();

    let od_ok = report.od == truth.od;
    let mut tt_err: f64 = 0.0;
    let mut tt_ok = true;
    for o in Direction::ALL {
        for d in Direction::ALL {
            match (report.travel_time.get(o, d), truth.travel_time.get(o, d)) {
                (Some(a), Some(b)) => tt_err = tt_err.max((a - b).abs()),
                (None, None) => {}
                _ => tt_ok = false,
            }
        }
    }
    tt_ok &= tt_err <= 0.5;

    let mut q_err: f64 = 0.0;
    let mut q_ok = report.queues.len() == truth.queues.len();
    for t in &truth.queues {
        match report.queues.iter().find(|q| q.approach == t.approach) {
            Some(m) if t.n >= 30 => {
                let e = ((m.mu - t.mu) / t.mu).abs().max(((m.sigma - t.sigma) / t.sigma).abs());
                q_err = q_err.max(e);
                q_ok &= e <= 0.05;
            }
            Some(_) => {}
            None => q_ok = false,
        }
    }
    let min_n = truth.queues.iter().map(|q| q.n).min().unwrap_or(0);

    let injected: Vec<(&str, f64)> =
        truth.journeys.iter().flat_map(|j| j.braking.iter().map(move |b| (j.id.as_str(), b.t_start))).collect();
    let matched = injected
        .iter()
        .filter(|(id, t)| report.braking.iter().any(|b| b.journey_id == *id && (b.t_start - t).abs() <= p.sample_interval))
        .count();
    let spurious = report
        .braking
        .iter()
        .filter(|b| !injected.iter().any(|(id, t)| b.journey_id == *id && (b.t_start - t).abs() <= p.sample_interval))
        .count();

    let smooth = synth_trajectories(&TrajectorySynth { seed: 2, ..Default::default() }).unwrap();
    let smooth_frags = clip_to_masks(&filter_journeys(smooth.journeys_in(masks.projection()).unwrap(), 120.0), &masks, 150.0);
    let smooth_report =
        analyze_intersection(&smooth_frags, masks.intersection("I1").unwrap(), None, &AnalysisOptions::default());
    let smooth_fp = smooth_report.braking.len();

    let braking_ok = matched == injected.len() && spurious == 0 && smooth_fp == 0;
    outcome(
        od_ok && tt_ok && q_ok && braking_ok && secs <= 180.0,
        format!(
            "O-D {} ({} vehicles); travel time max |err| {tt_err:.3} s; queue mu/sigma max rel err {:.2}% (min n {min_n}); braking {matched}/{} recovered, {spurious} spurious, {smooth_fp} on smooth traffic; {secs:.1} s per intersection-hour",
            if od_ok { "exact" } else { "differs" },
            truth.od.total(),
            100.0 * q_err,
            injected.len()
        ),
    )
}

// ------------------------------------------------------------------- ABOD

/// Plain double loop over all pairs of the other points, written from the
/// definition independently of the library.
fn brute_abof(points: &[Vec<f64>]) -> Vec<f64> {
    let n = points.len();
    (0..n)
        .map(|a| {
            let mut sw = 0.0;
            let mut swv = 0.0;
            let mut swv2 = 0.0;
            for b in 0..n {
                for c in b + 1..n {
                    if b == a || c == a {
                        continue;
                    }
                    let ab: Vec<f64> = points[b].iter().zip(&points[a]).map(|(x, y)| x - y).collect();
                    let ac: Vec<f64> = points[c].iter().zip(&points[a]).map(|(x, y)| x - y).collect();
                    let nab: f64 = ab.iter().map(|x| x * x).sum();
                    let nac: f64 = ac.iter().map(|x| x * x).sum();
                    let dot: f64 = ab.iter().zip(&ac).map(|(x, y)| x * y).sum();
                    let v = dot / (nab * nac);
                    let w = 1.0 / (nab.sqrt() * nac.sqrt());
                    sw += w;
                    swv += w * v;
                    swv2 += w * v * v;
                }
            }
            let mean = swv / sw;
            swv2 / sw - mean * mean
        })
        .collect()
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
}

fn random_rotation(rng: &mut ChaCha8Rng, d: usize) -> Vec<Vec<f64>> {
    let mut q: Vec<Vec<f64>> = Vec::new();
    while q.len() < d {
        let mut v: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        for u in &q {
            let dot: f64 = v.iter().zip(u).map(|(x, y)| x * y).sum();
            v.iter_mut().zip(u).for_each(|(x, y)| *x -= dot * y);
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-6 {
            q.push(v.into_iter().map(|x| x / norm).collect());
        }
    }
    q
}

fn abod_correctness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let d = 4;
    let mut max_oracle: f64 = 0.0;
    let mut max_invariance: f64 = 0.0;
    for _ in 0..50 {
        let n = rng.random_range(5..=30);
        let pts: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| rng.random_range(-10.0..10.0)).collect()).collect();
        let fast = abof_scores(&pts, n - 1).unwrap();
        for (a, b) in fast.iter().zip(brute_abof(&pts)) {
            max_oracle = max_oracle.max(rel(*a, b));
        }
        let shift: Vec<f64> = (0..d).map(|_| rng.random_range(-1e3..1e3)).collect();
        let rot = random_rotation(&mut rng, d);
        let moved: Vec<Vec<f64>> = pts
            .iter()
            .map(|p| rot.iter().map(|row| row.iter().zip(p).map(|(r, x)| r * x).sum::<f64>()).zip(&shift).map(|(x, s)| x + s).collect())
            .collect();
        // scores near zero are rounding noise, so errors are taken relative
        // to the largest score in the set; k = 2 has one pair and no variance
        let k = rng.random_range(3..n);
        let base = abof_scores(&pts, k).unwrap();
        let scale = base.iter().copied().fold(0.0, f64::max);
        for (a, b) in base.iter().zip(abof_scores(&moved, k).unwrap()) {
            max_invariance = max_invariance.max((a - b).abs() / scale);
        }
    }
    let mut outlier_min = 0;
    for seed in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let mut pts: Vec<Vec<f64>> = (0..20).map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        pts.push((0..d).map(|_| 25.0 * rng.random_range(0.5..1.0)).collect());
        let s = abof_scores(&pts, 10).unwrap();
        let argmin = (0..s.len()).min_by(|&a, &b| s[a].total_cmp(&s[b])).unwrap();
        outlier_min += usize::from(argmin == 20);
    }
    outcome(
        max_oracle <= 1e-9 && max_invariance <= 1e-9 && outlier_min == 100,
        format!(
            "k = n-1 vs brute force max rel err {max_oracle:.2e} over 50 sets; translation+rotation max rel err {max_invariance:.2e}; far outlier has minimum ABOF in {outlier_min}/100"
        ),
    )
}

// ------------------------------------------------- interruption detection

fn path_arg(dir: &Path, name: &str) -> String {
    dir.join(name).display().to_string()
}

fn interruption_detection() -> Outcome {
    let n_inj = 5;
    let mut clean_seeds = 0;
    let mut per_seed = Vec::new();
    for seed in 1..=20u64 {
        let tmp = tempfile::tempdir().unwrap();
        let d = tmp.path();
        let s = |n: &str| path_arg(d, n);
        std::fs::write(d.join("p.json"), format!("{{\"blockage_injections\": {n_inj}, \"seed\": {seed}}}")).unwrap();
        assert_eq!(cli::run(["tl", "synth", "trajectories", "--out", &s("syn"), "--params", &s("p.json"), "--weeks", "2"]), 0);
        assert_eq!(
            cli::run(["tl", "masks", "--roads", &s("syn/roads.geojson"), "--intersections", &s("syn/intersections.geojson"), "--out", &s("m.geojson")]),
            0
        );
        assert_eq!(cli::run(["tl", "ingest", "--masks", &s("m.geojson"), "--store", &s("store"), &s("syn/trajectories.csv")]), 0);
        let truth: Truth = serde_json::from_str(&std::fs::read_to_string(d.join("syn/truth.json")).unwrap()).unwrap();
        let window = format!("{}..{}", truth.window.start, truth.window.end);
        let common = ["--store", &s("store"), "--masks", &s("m.geojson"), "--intersection", "I1", "--window", &window, "--out", &s("out")];
        // the analytics report gives the size of the current cohort
        assert_eq!(cli::run(["tl", "analyze"].iter().chain(common.iter()).copied()), 0);
        let bundle = std::fs::read_dir(d.join("out/I1")).unwrap().next().unwrap().unwrap().path();
        let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(bundle.join("report.json")).unwrap()).unwrap();
        let n_current = report["fragments"].as_u64().unwrap();
        let contamination = (n_inj as f64 / n_current as f64).to_string();
        let code = cli::run(["tl", "detect"].iter().chain(common.iter()).copied().chain(["--contamination", &contamination]));
        let out: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(bundle.join("detect_abod.json")).unwrap()).unwrap();
        let flags: Vec<&str> = out["flags"].as_array().unwrap().iter().filter_map(|f| f.as_str()).collect();
        let blocked: BTreeSet<&str> = truth.journeys.iter().filter(|j| j.blocked).map(|j| j.id.as_str()).collect();
        let tp = flags.iter().filter(|f| blocked.contains(*f)).count();
        let fp = flags.len() - tp;
        if code == cli::EXIT_FLAGS && tp >= 1 && fp == 0 {
            clean_seeds += 1;
        } else {
            per_seed.push(format!("seed {seed}: {tp} injected and {fp} clean flagged, exit {code}"));
        }
    }
    outcome(
        clean_seeds == 20,
        format!(
            "{clean_seeds}/20 seeds flag >= 1 injected and 0 clean journeys ({n_inj} injected, contamination = {n_inj}/current){}",
            if per_seed.is_empty() { String::new() } else { format!("; {}", per_seed.join("; ")) }
        ),
    )
}

// ------------------------------------------------------------ signal model

fn textbook() -> RingBarrierPlan {
    RingBarrierPlan::new(
        (1..=8).map(|p| PhaseSpec::new(p, 8.0, 50.0)).collect(),
        vec![14.0, 40.0, 14.0, 28.0, 14.0, 40.0, 14.0, 28.0],
        120.0,
    )
}

fn random_valid_plan(rng: &mut ChaCha8Rng) -> RingBarrierPlan {
    let phases: Vec<PhaseSpec> = (1..=8).map(|p| PhaseSpec::new(p, 8.0, 120.0)).collect();
    let side_a = rng.random_range(40.0..100.0_f64).round();
    let side_b = rng.random_range(40.0..100.0_f64).round();
    let mut splits = vec![0.0; 8];
    for (first, second, side) in [(1, 2, side_a), (5, 6, side_a), (3, 4, side_b), (7, 8, side_b)] {
        let green = side - 12.0;
        let s = rng.random_range(8.0..green - 8.0);
        splits[first - 1] = s;
        splits[second - 1] = green - s;
    }
    let mut plan = RingBarrierPlan::new(phases, splits, side_a + side_b);
    if rng.random_bool(0.5) {
        plan.ring1 = vec![2, 1, 4, 3];
    }
    if rng.random_bool(0.5) {
        plan.ring2 = vec![5, 6, 8, 7];
    }
    plan
}

/// Green phases at `t` by walking each ring's sequence.
fn scan_greens(plan: &RingBarrierPlan, t: f64) -> BTreeSet<u8> {
    let u = t.rem_euclid(plan.cycle_length);
    let mut out = BTreeSet::new();
    for ring in [1, 2] {
        let mut start = 0.0;
        for &p in plan.ring(ring) {
            let spec = plan.spec(p).unwrap();
            let split = plan.split(p);
            if u >= start && u < start + split {
                out.insert(p);
            }
            start += split + spec.clearance();
        }
    }
    out
}

fn signal_model() -> Outcome {
    let base = textbook();
    let variant = |edit: &dyn Fn(&mut RingBarrierPlan)| {
        let mut p = base.clone();
        edit(&mut p);
        p
    };
    let classes: Vec<ViolationCase> = vec![
        (
            "barrier A desync",
            variant(&|p| {
                p.splits[0] += 2.0;
                p.splits[2] -= 2.0;
            }),
            |v| matches!(v, Violation::BarrierDesync { barrier: 0, .. }),
        ),
        (
            "barrier B desync",
            variant(&|p| {
                p.splits[6] += 2.0;
                p.splits[4] -= 2.0;
            }),
            |v| matches!(v, Violation::BarrierDesync { barrier: 1, .. }),
        ),
        (
            "split below minimum",
            variant(&|p| {
                p.splits[0] = 6.0;
                p.splits[1] = 48.0;
                p.splits[4] = 6.0;
                p.splits[5] = 48.0;
            }),
            |v| matches!(v, Violation::SplitBelowMin { .. }),
        ),
        (
            "split above maximum",
            variant(&|p| {
                for (short, long) in [(0, 1), (4, 5)] {
                    p.phases[short].min_green = 1.0;
                    p.splits[short] = 2.0;
                    p.splits[long] = 52.0;
                }
            }),
            |v| matches!(v, Violation::SplitAboveMax { .. }),
        ),
        ("ring 1 sum", variant(&|p| p.splits[3] = 38.0), |v| matches!(v, Violation::RingSum { ring: 1, .. })),
        ("ring 2 sum", variant(&|p| p.splits[7] = 38.0), |v| matches!(v, Violation::RingSum { ring: 2, .. })),
        ("phase from the other ring", variant(&|p| p.ring1 = vec![1, 6, 3, 4]), |v| {
            matches!(v, Violation::ConflictingGreens { .. })
        }),
        ("sequence crossing the barrier", variant(&|p| p.ring2 = vec![5, 7, 6, 8]), |v| {
            matches!(v, Violation::ConflictingGreens { .. })
        }),
        (
            "clearance below minimum",
            variant(&|p| {
                for i in [2, 6] {
                    p.phases[i].yellow = 2.0;
                    p.splits[i] = 16.0;
                }
            }),
            |v| matches!(v, Violation::BadPhaseSpec { .. }),
        ),
    ];

    let mut rejected = 0;
    let mut missed = Vec::new();
    for (name, plan, is_class) in &classes {
        match validate_plan(plan) {
            Err(v) if v.iter().any(is_class) => rejected += 1,
            other => missed.push(format!("{name}: {other:?}")),
        }
    }
    let textbook_ok = validate_plan(&base).is_ok();

    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut violations = 0;
    let mut disagreements = 0;
    let plans: Vec<RingBarrierPlan> = (0..20).map(|_| random_valid_plan(&mut rng)).collect();
    let mut invalid_generated = 0;
    for plan in &plans {
        if validate_plan(plan).is_err() {
            invalid_generated += 1;
        }
    }
    for k in 0..10_000 {
        let plan = &plans[k % plans.len()];
        let tl = compile_plan(plan).unwrap();
        let t = rng.random_range(-3.0 * plan.cycle_length..3.0 * plan.cycle_length);
        let states = tl.state_at(t);
        let greens: Vec<u8> = (1..=8).filter(|&p| states[usize::from(p) - 1] == PhaseState::G).collect();
        let per_ring_ok = [1, 2].iter().all(|&r| greens.iter().filter(|&&p| ring_of(p) == r).count() <= 1);
        let barrier_ok = greens.windows(2).all(|w| barrier_of(w[0]) == barrier_of(w[1]));
        if !(per_ring_ok && barrier_ok) {
            violations += 1;
        }
        if greens.iter().copied().collect::<BTreeSet<u8>>() != scan_greens(plan, t) {
            disagreements += 1;
        }
    }
    outcome(
        rejected == classes.len() && textbook_ok && invalid_generated == 0 && violations == 0 && disagreements == 0,
        format!(
            "{rejected}/{} violation classes rejected{}; 10000 probes over 20 random plans: {violations} incompatible green sets, {disagreements} disagreements with a ring scan",
            classes.len(),
            if missed.is_empty() { String::new() } else { format!(" (missed: {})", missed.join(", ")) }
        ),
    )
}

// ------------------------------------------------------------ route sampling

/// Minimum squared error allocation over every composition of `total`;
/// ties go to the lexicographically largest vector.
fn enumerate_allocation(total: u64, quotas: &[f64]) -> Vec<u64> {
    fn rec(i: usize, left: u64, quotas: &[f64], cur: &mut Vec<u64>, best: &mut Option<(f64, Vec<u64>)>) {
        if i + 1 == quotas.len() {
            cur.push(left);
            let err: f64 = cur.iter().zip(quotas).map(|(&a, q)| (a as f64 - q).powi(2)).sum();
            let better = match best {
                None => true,
                Some((e, v)) => err < *e - 1e-12 || ((err - *e).abs() <= 1e-12 && *cur > *v),
            };
            if better {
                *best = Some((err, cur.clone()));
            }
            cur.pop();
            return;
        }
        for a in 0..=left {
            cur.push(a);
            rec(i + 1, left - a, quotas, cur, best);
            cur.pop();
        }
    }
    let mut best = None;
    rec(0, total, quotas, &mut Vec::new(), &mut best);
    best.unwrap().1
}

fn route_sampling() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut lr_mismatch = 0;
    for _ in 0..200 {
        let k = rng.random_range(2..=5);
        let total = rng.random_range(0..=14);
        // dyadic weights keep quotas exact so ties are real ties
        let mut cuts: Vec<u32> = (0..k - 1).map(|_| rng.random_range(0..=64)).collect();
        cuts.sort_unstable();
        let mut weights = Vec::new();
        let mut prev = 0;
        for c in cuts.into_iter().chain([64]) {
            weights.push(f64::from(c - prev) / 64.0);
            prev = c;
        }
        let quotas: Vec<f64> = weights.iter().map(|w| total as f64 * w).collect();
        if largest_remainder(total, &weights).unwrap() != enumerate_allocation(total, &quotas) {
            lr_mismatch += 1;
        }
    }

    let network = Network::single_intersection("I1", 200.0, 15.0, Some(6));
    let routes: Vec<String> = network.routes.keys().cloned().collect();
    let mut count_mismatch = 0;
    for t in 0..100u64 {
        let mut counts = BTreeMap::new();
        for r in routes.choose_multiple(&mut rng, 6) {
            counts.insert(r.clone(), rng.random_range(0..60));
        }
        let mut approaches = BTreeMap::new();
        let picks: Vec<&String> = routes.choose_multiple(&mut rng, 3).collect();
        let w: Vec<f64> = vec![0.5, 0.25, 0.25];
        approaches.insert(
            "mixed".to_string(),
            ApproachDemand {
                total: rng.random_range(0..80),
                probabilities: picks.into_iter().cloned().zip(w).collect(),
            },
        );
        let demand = Demand { counts, approaches };
        let speed = SpeedFactorModel { mean: 1.0, std: 0.1 };
        let vehicles = sample_routes(&demand, &network, (0.0, 3600.0), &speed, t, ArrivalProcess::Uniform).unwrap();
        let mut got: BTreeMap<String, u64> = BTreeMap::new();
        for v in &vehicles {
            *got.entry(v.route_name.clone()).or_default() += 1;
        }
        let mut want = demand.route_counts().unwrap();
        want.retain(|_, n| *n > 0);
        if got != want {
            count_mismatch += 1;
        }
    }
    outcome(
        lr_mismatch == 0 && count_mismatch == 0,
        format!(
            "largest remainder vs enumeration: {lr_mismatch}/200 mismatches; per-route counts: {count_mismatch}/100 tables differ"
        ),
    )
}

// --------------------------------------------------------------- toy sim

fn one_vehicle(network: &Network, route: &str, depart: f64, speed_factor: f64) -> VehicleSpec {
    VehicleSpec {
        id: "v".into(),
        depart,
        route_name: route.into(),
        route: network.routes[route].clone(),
        speed_factor,
    }
}

fn textbook_controls(network: &Network, offset: f64) -> BTreeMap<String, IntersectionControl> {
    let tl = compile_plan(&textbook()).unwrap();
    network.intersections.iter().map(|id| (id.clone(), IntersectionControl { timeline: tl.clone(), offset })).collect()
}

fn toy_sim_sanity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let params = ToyParams::default();
    let mut ff_err: f64 = 0.0;
    let mut red_err: f64 = 0.0;
    for _ in 0..50 {
        let leg = rng.random_range(50.0..800.0);
        let speed = rng.random_range(5.0..25.0);
        let sf = rng.random_range(0.6..1.6);
        let network = Network::single_intersection("I1", leg, speed, Some(6));
        let controls = textbook_controls(&network, 0.0);
        let v_eff = speed * sf;
        // EB through runs on phase 2, green 20..60 s of every 120 s cycle
        let t_stop = rng.random_range(22.5..59.5);
        let r = run_toy_sim("ff", &network, &controls, &[one_vehicle(&network, "EB-through", t_stop - leg / v_eff, sf)], &params)
            .unwrap();
        let closed_form = 2.0 * leg / v_eff;
        ff_err = ff_err.max((r.vehicles[0].travel_time.unwrap() - closed_form).abs());

        // a red arrival waits for the next green plus the start-up lost time
        let t_red = rng.random_range(61.0..139.0);
        let r = run_toy_sim("red", &network, &controls, &[one_vehicle(&network, "EB-through", t_red - leg / v_eff, sf)], &params)
            .unwrap();
        let expected_delay = 140.0 + params.startup_lost_time - t_red;
        red_err = red_err.max((r.vehicles[0].delay - expected_delay).abs());
    }

    let mut conservation_failures = 0;
    for s in 0..50u64 {
        let n = rng.random_range(2..5);
        let network = Network::corridor(n, rng.random_range(150.0..500.0), 200.0, 14.0, Some(rng.random_range(0..8)));
        let mut counts = BTreeMap::new();
        for r in network.routes.keys() {
            if rng.random_bool(0.4) {
                counts.insert(r.clone(), rng.random_range(1..40));
            }
        }
        let demand = Demand { counts, approaches: BTreeMap::new() };
        let speed = SpeedFactorModel { mean: 1.0, std: 0.1 };
        let vehicles = sample_routes(&demand, &network, (0.0, 900.0), &speed, s, ArrivalProcess::Poisson).unwrap();
        // short horizons leave vehicles in the network
        let p = ToyParams { horizon_end: rng.random_range(900.0..1500.0), ..Default::default() };
        let r = run_toy_sim("c", &network, &textbook_controls(&network, rng.random_range(0.0..120.0)), &vehicles, &p).unwrap();
        let a = &r.aggregates;
        if a.injected != vehicles.len() || a.injected != a.throughput + a.incomplete {
            conservation_failures += 1;
        }
    }
    outcome(
        ff_err <= 1e-6 && red_err <= 1e-9 && conservation_failures == 0,
        format!(
            "free-flow max |err| {ff_err:.2e} s over 50 links; red-arrival delay max |err| {red_err:.2e} s; conservation broken in {conservation_failures}/50 scenarios"
        ),
    )
}

// ------------------------------------------------------------------ sweeps

fn sweep_grid(cycles: &[f64], weights: &[[f64; 8]], seeds: &[u64], demand: serde_json::Value) -> ParameterGrid {
    serde_json::from_value(serde_json::json!({
        "demand": demand,
        "horizon": [0.0, 900.0],
        "toy": {"horizon_end": 2400.0},
        "axes": {
            "cycle_length": cycles,
            "splits": weights.iter().map(|w| serde_json::json!({"weights": w})).collect::<Vec<_>>(),
            "seed": seeds,
            "speed_factor": [{"mean": 1.0, "std": 0.08}]
        }
    }))
    .unwrap()
}

/// Toy backend padded to a minimum run time, for measuring pool speed-up.
struct SlowToy {
    inner: ToyBackend,
    min: Duration,
}

impl Backend for SlowToy {
    fn name(&self) -> &str {
        "slow-toy"
    }

    fn check_available(&self) -> Result<(), String> {
        Ok(())
    }

    fn run(&self, scenario: &ScenarioSpec, network: &Network, workdir: Option<&Path>) -> Result<RunResult, SimError> {
        let t0 = Instant::now();
        let r = self.inner.run(scenario, network, workdir);
        if let Some(rest) = self.min.checked_sub(t0.elapsed()) {
            std::thread::sleep(rest);
        }
        r
    }
}

fn sweep_determinism() -> Outcome {
    let network = Network::corridor(3, 300.0, 250.0, 15.0, Some(6));
    let grid = sweep_grid(
        &[90.0, 120.0],
        &[[1.0, 3.0, 1.0, 2.0, 1.0, 3.0, 1.0, 2.0], [1.0, 2.0, 1.0, 2.0, 1.0, 2.0, 1.0, 2.0]],
        &[1, 2, 3, 4],
        serde_json::json!({"counts": {"EB-through": 150, "WB-through": 140, "I2:NB-through": 50, "I3:SB-left": 20}}),
    );
    let scenarios = expand_grid(&grid).unwrap().scenarios;
    let backend = ToyBackend { params: grid.toy };
    let runs: Vec<SweepResult> = [1, 2, 4]
        .iter()
        .map(|&w| run_parallel(&scenarios, &network, w, &backend, &SweepOutput::default()).unwrap())
        .collect();
    let identical = runs.windows(2).all(|w| w[0] == w[1]);
    let ok_rows = runs[0].rows.iter().filter(|r| r.aggregates.is_some()).count();

    let cores = std::thread::available_parallelism().map_or(1, |n| n.get());
    let (speed_ok, speed_note) = if cores >= 4 {
        let slow = SlowToy { inner: backend, min: Duration::from_secs(1) };
        let time = |w: usize| {
            let t0 = Instant::now();
            run_parallel(&scenarios, &network, w, &slow, &SweepOutput::default()).unwrap();
            t0.elapsed().as_secs_f64()
        };
        let (t1, t4) = (time(1), time(4));
        (t4 <= 0.6 * t1, format!("4-worker/1-worker wall clock {:.2} ({t4:.1} s vs {t1:.1} s, limit 0.6)", t4 / t1))
    } else {
        (true, format!("speed-up clause not applicable: {cores} core(s) available, needs >= 4"))
    };
    outcome(
        scenarios.len() == 16 && identical && ok_rows == 16 && speed_ok,
        format!(
            "{} scenarios, {ok_rows} ok; results for workers 1/2/4 {}; {speed_note}",
            scenarios.len(),
            if identical { "identical" } else { "differ" }
        ),
    )
}

fn grid_optimum() -> Outcome {
    // only the east-west through movements carry traffic, so every second of
    // green moved from the other phases to phases 2 and 6 lowers delay
    let network = Network::single_intersection("I1", 300.0, 15.0, Some(6));
    let weights = [
        [1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0],
        [1.0, 2.0, 1.0, 1.0, 1.0, 2.0, 1.0, 1.0],
        [1.0, 3.0, 1.0, 1.0, 1.0, 3.0, 1.0, 1.0],
        [1.0, 4.0, 1.0, 1.0, 1.0, 4.0, 1.0, 1.0],
        [1.0, 1.0, 1.0, 2.0, 1.0, 1.0, 1.0, 2.0],
        [2.0, 2.0, 1.0, 1.0, 2.0, 2.0, 1.0, 1.0],
    ];
    let mut grid = sweep_grid(
        &[100.0],
        &weights,
        &[0],
        serde_json::json!({"counts": {"EB-through": 140, "WB-through": 130}}),
    );
    grid.axes.speed_factor = vec![SpeedFactorModel { mean: 1.0, std: 0.0 }];
    let expansion = expand_grid(&grid).unwrap();
    let backend = ToyBackend { params: grid.toy };
    let result = run_parallel(&expansion.scenarios, &network, 2, &backend, &SweepOutput::default()).unwrap();
    let chosen = select_best(&result, Metric::MeanDelay).unwrap().scenario_id.clone();

    // exhaustive enumeration, one scenario at a time
    let mut table: Vec<(f64, String, f64)> = expansion
        .scenarios
        .iter()
        .map(|s| {
            let r = backend.run(s, &network, None).unwrap();
            (r.aggregates.mean_delay.unwrap(), s.scenario_id.clone(), s.plan.split(2))
        })
        .collect();
    table.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let (best_delay, best_id, best_split) = table[0].clone();
    let max_split = table.iter().map(|t| t.2).fold(f64::NEG_INFINITY, f64::max);
    let strict = table.len() > 1 && table[1].0 > best_delay;
    outcome(
        chosen == best_id && (best_split - max_split).abs() < 1e-9 && strict,
        format!(
            "{} scenarios; enumeration optimum {best_id} (mean delay {best_delay:.2} s, phase 2 green {best_split:.1} s, the largest in the grid); select_best chose {chosen}",
            table.len()
        ),
    )
}
