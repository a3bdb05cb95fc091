//! Seeded generators for desk-scale verification: signalized-intersection
//! trajectories with a ground-truth sidecar, detector event logs with known
//! volumes, and toy simulation networks.

mod kinematics;

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use kinematics::Profile;

use crate::analytics::{
    mean_and_sample_std, od_matrix, travel_time_matrix, MovementRecord, OdMatrix, QueueDistribution, TravelTimeMatrix,
    DEFAULT_QUEUE_MIN_STOP_S,
};
use crate::geo::geojson::RawFeatures;
use crate::geo::{GeoError, GeoPoint, PlanarPoint, Projection};
use crate::ingest::{AtspmEvent, TrajectoryRow, DETECTOR_ON};
use crate::masks::{Direction, INNER_BOX_HALF_WIDTH_M};
use crate::signal::{compile_plan, validate_plan, PhaseSpec, RingBarrierPlan, Turn};
use crate::simkit::{
    run_toy_sim, sample_routes, turn_name, turned, ArrivalProcess, Demand, IntersectionControl, Network, SimError,
    SpeedFactorModel, ToyParams,
};
use crate::trajectory::{Ignition, Journey, Sample};
use crate::window::TimeWindow;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid generator parameter: {0}")]
    Params(String),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Geo(#[from] GeoError),
}

pub const QUEUE_SPACING_M: f64 = 7.0;
pub const APPROACH_DECEL_MPS2: f64 = 3.0;
pub const LAUNCH_ACCEL_MPS2: f64 = 2.5;
/// Deepest queue slot a generated vehicle stops in.
pub const MAX_QUEUE_SLOT: usize = 12;
/// Braking injections start this far past the intersection centre.
pub const BRAKING_START_M: f64 = 35.0;
/// Speed a braking injection ends at; above the stop threshold.
pub const BRAKING_END_SPEED_MPS: f64 = 1.5;
/// Cruise speed range of vehicles that receive a braking injection.
pub const BRAKING_CRUISE_MPS: (f64, f64) = (15.5, 16.5);
pub const BLOCKAGE_FACTOR: f64 = 5.0;
/// Blockage injections only target stops at least this long.
pub const BLOCKAGE_MIN_STOP_S: f64 = 20.0;

fn default_demand() -> Demand {
    let mut counts = BTreeMap::new();
    for d in Direction::ALL {
        let through = if matches!(d, Direction::EB | Direction::WB) { 150 } else { 120 };
        counts.insert(format!("{d}-through"), through);
        counts.insert(format!("{d}-left"), 40);
        counts.insert(format!("{d}-right"), 40);
    }
    Demand { counts, approaches: BTreeMap::new() }
}

fn default_plan() -> RingBarrierPlan {
    let phases = (1..=8).map(|p| PhaseSpec::new(p, 8.0, 50.0)).collect();
    RingBarrierPlan::new(phases, vec![14.0, 40.0, 14.0, 28.0, 14.0, 40.0, 14.0, 28.0], 120.0)
}

/// One four-leg intersection at `origin` with straight north-south and
/// east-west roads, vehicles driving the centerlines.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrajectorySynth {
    pub seed: u64,
    pub intersection_id: String,
    /// Longitude and latitude of the intersection centre.
    pub origin: (f64, f64),
    /// Epoch seconds of the first departure window.
    pub start: f64,
    pub duration_s: f64,
    /// Length of each road leg from the centre.
    pub leg_length: f64,
    pub speed_limit: f64,
    pub speed_factor: SpeedFactorModel,
    /// Vehicles per route over the whole duration; routes are `{dir}-{turn}`.
    pub demand: Demand,
    pub plan: RingBarrierPlan,
    pub sample_interval: f64,
    pub left_bay: Option<u32>,
    pub braking_injections: usize,
    pub blockage_injections: usize,
    /// Prepended to every journey id.
    pub id_prefix: String,
}

impl Default for TrajectorySynth {
    fn default() -> Self {
        Self {
            seed: 1,
            intersection_id: "I1".into(),
            origin: (-81.38, 28.54),
            start: 1_709_625_600.0,
            duration_s: 3600.0,
            leg_length: 1200.0,
            speed_limit: 15.0,
            speed_factor: SpeedFactorModel { mean: 1.0, std: 0.05 },
            demand: default_demand(),
            plan: default_plan(),
            sample_interval: 3.0,
            left_bay: Some(6),
            braking_injections: 0,
            blockage_injections: 0,
            id_prefix: String::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StopTruth {
    pub t_start: f64,
    /// Time spent at zero speed.
    pub duration: f64,
    pub location: PlanarPoint,
    pub distance_to_stop_bar: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BrakingTruth {
    /// A sample time; the deceleration spans exactly one sample interval.
    pub t_start: f64,
    pub duration: f64,
    pub decel: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JourneyTruth {
    pub id: String,
    pub route: String,
    pub origin: Direction,
    pub dest: Direction,
    pub turn: Turn,
    pub depart: f64,
    /// Time between entering and leaving the intersection disc.
    pub travel_time: f64,
    pub stops: Vec<StopTruth>,
    pub braking: Vec<BrakingTruth>,
    pub blocked: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Truth {
    pub intersection_id: String,
    pub window: TimeWindow,
    pub mask_radius: f64,
    pub queue_min_stop_s: f64,
    pub journeys: Vec<JourneyTruth>,
    pub od: OdMatrix,
    pub travel_time: TravelTimeMatrix,
    pub queues: Vec<QueueDistribution>,
    /// Vehicles the queue model had not cleared by its horizon; not emitted.
    pub dropped: usize,
}

#[derive(Debug, Clone)]
pub struct SynthTrajectories {
    pub projection: Projection,
    /// Planar journeys in the projection above.
    pub journeys: Vec<Journey>,
    pub truth: Truth,
}

fn unit(d: Direction) -> (f64, f64) {
    match d {
        Direction::NB => (0.0, 1.0),
        Direction::SB => (0.0, -1.0),
        Direction::EB => (1.0, 0.0),
        Direction::WB => (-1.0, 0.0),
    }
}

/// Stop lengths near the 10 s queue cut or the 3 s stop rule are pushed
/// away from them so that sampling every 3 s cannot move a stop across
/// either threshold.
fn separate_stop(d: f64) -> f64 {
    if d < 5.5 {
        5.5
    } else if d > 6.2 && d < 12.5 {
        12.5
    } else {
        d
    }
}

fn launch_time(distance: f64, v: f64) -> f64 {
    let ramp = v * v / (2.0 * LAUNCH_ACCEL_MPS2);
    if distance <= ramp {
        (2.0 * distance / LAUNCH_ACCEL_MPS2).sqrt()
    } else {
        v / LAUNCH_ACCEL_MPS2 + (distance - ramp) / v
    }
}

const MASK_RADIUS_M: f64 = crate::masks::DEFAULT_RADIUS_M;

/// Drives the queue simulator over the intersection, then turns every
/// vehicle's queue arrival and discharge into a smooth speed profile
/// sampled at `sample_interval`.
pub fn synth_trajectories(p: &TrajectorySynth) -> Result<SynthTrajectories, SynthError> {
    let bad = |m: String| Err(SynthError::Params(m));
    if !(p.duration_s > 0.0) || !(p.leg_length > 2.0 * MASK_RADIUS_M) || !(p.speed_limit > 0.0) || !(p.sample_interval > 0.0) {
        return bad("duration, leg length (> 250 m), speed limit and sample interval must be positive".into());
    }
    if !p.start.is_finite() {
        return bad("start must be finite".into());
    }
    if let Err(v) = validate_plan(&p.plan) {
        return bad(format!("signal plan fails validation: {v:?}"));
    }
    let projection = Projection::new(GeoPoint::new(p.origin.0, p.origin.1)?)?;
    let l = p.leg_length;
    let stop_bar_s = l - INNER_BOX_HALF_WIDTH_M;
    let network = Network::single_intersection(&p.intersection_id, stop_bar_s, p.speed_limit, p.left_bay);
    let vehicles = sample_routes(&p.demand, &network, (0.0, p.duration_s), &p.speed_factor, p.seed, ArrivalProcess::Uniform)?;
    let controls = BTreeMap::from([(
        p.intersection_id.clone(),
        IntersectionControl { timeline: compile_plan(&p.plan).map_err(|e| SynthError::Params(e.to_string()))?, offset: 0.0 },
    )]);
    let clearance = 1800.0 + p.duration_s;
    let params = ToyParams { horizon_end: p.duration_s + clearance, ..Default::default() };
    let run = run_toy_sim("synth", &network, &controls, &vehicles, &params)?;

    // Per vehicle: cruise speed, queue arrival a and discharge d at the stop bar.
    struct Plan {
        idx: usize,
        v: f64,
        a: f64,
        d: f64,
        turn: Turn,
        origin: Direction,
    }
    let mut plans = Vec::new();
    let mut dropped = 0;
    for (i, (spec, res)) in vehicles.iter().zip(&run.vehicles).enumerate() {
        if res.arrive.is_none() {
            dropped += 1;
            continue;
        }
        let m = network.movement(&spec.route[0]).expect("sampled route");
        let v = p.speed_limit * spec.speed_factor;
        let a = spec.depart + stop_bar_s / v;
        plans.push(Plan { idx: i, v, a, d: a + res.delay, turn: m.turn, origin: m.approach });
    }

    // Queue slot: vehicles of the same lane group that reached the stop area
    // earlier and are still waiting.
    let lane = |pl: &Plan| (pl.origin, pl.turn == Turn::Left);
    let mut slot = vec![0usize; plans.len()];
    for (i, pi) in plans.iter().enumerate() {
        if pi.d - pi.a <= 1e-9 {
            continue;
        }
        let ahead = plans
            .iter()
            .enumerate()
            .filter(|(j, pj)| *j != i && lane(pj) == lane(pi) && (pj.a, *j) < (pi.a, i) && pj.d > pi.a)
            .count();
        slot[i] = ahead.min(MAX_QUEUE_SLOT);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(p.seed ^ 0x5eed_b10c);
    // Blocked vehicles must reach the stop bar inside the generated hour so
    // their intersection fragment falls in the analysed window.
    let mut blockable: Vec<usize> = (0..plans.len())
        .filter(|&i| plans[i].d - plans[i].a >= BLOCKAGE_MIN_STOP_S + 10.0 && plans[i].a < p.duration_s)
        .collect();
    blockable.shuffle(&mut rng);
    if blockable.len() < p.blockage_injections {
        return bad(format!("only {} vehicles wait long enough for a blockage injection", blockable.len()));
    }
    let blocked: std::collections::BTreeSet<usize> = blockable.into_iter().take(p.blockage_injections).collect();
    let mut brakeable: Vec<usize> = (0..plans.len()).filter(|i| !blocked.contains(i)).collect();
    brakeable.shuffle(&mut rng);
    if brakeable.len() < p.braking_injections {
        return bad("more braking injections than vehicles".into());
    }
    let braking: std::collections::BTreeSet<usize> = brakeable.into_iter().take(p.braking_injections).collect();

    let center = PlanarPoint::new(0.0, 0.0);
    let mut journeys = Vec::new();
    let mut truths = Vec::new();
    for (i, pl) in plans.iter().enumerate() {
        let spec = &vehicles[pl.idx];
        let phase = rng.random_range(0.0..p.sample_interval);
        let v_exit = if braking.contains(&i) { rng.random_range(BRAKING_CRUISE_MPS.0..BRAKING_CRUISE_MPS.1) } else { pl.v };
        let mut prof = Profile::new(pl.v);
        let mut stops = Vec::new();
        let dest = turned(pl.origin, pl.turn);
        let (ix, iy) = unit(pl.origin);
        let (ox, oy) = unit(dest);
        let position = |s: f64| {
            if s <= l {
                PlanarPoint::new(center.x - ix * (l - s), center.y - iy * (l - s))
            } else {
                PlanarPoint::new(center.x + ox * (s - l), center.y + oy * (s - l))
            }
        };
        if pl.d - pl.a > 1e-9 {
            let gap = QUEUE_SPACING_M * slot[i] as f64;
            let stop_s = stop_bar_s - gap;
            prof.cruise_to(stop_s - pl.v * pl.v / (2.0 * APPROACH_DECEL_MPS2));
            prof.ramp_to(0.0, APPROACH_DECEL_MPS2);
            let t_stop = prof.end_time();
            let raw = pl.d - launch_time(gap, v_exit) - (spec.depart + t_stop);
            let mut hold = separate_stop(raw);
            if blocked.contains(&i) {
                hold *= BLOCKAGE_FACTOR;
            }
            prof.hold(hold);
            prof.ramp_to(v_exit, LAUNCH_ACCEL_MPS2);
            stops.push(StopTruth {
                t_start: spec.depart + t_stop,
                duration: hold,
                location: position(stop_s),
                distance_to_stop_bar: gap,
            });
        } else {
            prof.cruise_to(stop_bar_s);
            if v_exit > pl.v {
                prof.ramp_to(v_exit, LAUNCH_ACCEL_MPS2);
            } else if v_exit < pl.v {
                prof.ramp_to(v_exit, APPROACH_DECEL_MPS2);
            }
        }
        let mut brakes = Vec::new();
        if braking.contains(&i) {
            let (t_c, s_c) = (prof.end_time(), prof.end_s());
            let target = s_c.max(l + BRAKING_START_M);
            let t_star = t_c + (target - s_c) / v_exit;
            let t_k = phase + ((t_star - phase) / p.sample_interval).ceil() * p.sample_interval;
            prof.hold_speed(t_k - t_c);
            let decel = (v_exit - BRAKING_END_SPEED_MPS) / p.sample_interval;
            prof.accelerate(-decel, p.sample_interval);
            prof.ramp_to(v_exit, LAUNCH_ACCEL_MPS2);
            brakes.push(BrakingTruth { t_start: spec.depart + t_k, duration: p.sample_interval, decel: -decel });
        }
        let t_end = prof.time_at(2.0 * l);
        let mut samples = Vec::new();
        let mut t = phase;
        while t <= t_end {
            let (s, v) = prof.at(t);
            let pos = position(s);
            samples.push(Sample { t: p.start + spec.depart + t, pos, speed: Some(v), ignition: Ignition::On });
            t += p.sample_interval;
        }
        let id = format!("{}{}", p.id_prefix, spec.id);
        let travel_time = prof.time_at(l + MASK_RADIUS_M) - prof.time_at(l - MASK_RADIUS_M);
        for s in &mut stops {
            s.t_start += p.start;
        }
        for b in &mut brakes {
            b.t_start += p.start;
        }
        truths.push(JourneyTruth {
            id: id.clone(),
            route: spec.route_name.clone(),
            origin: pl.origin,
            dest,
            turn: pl.turn,
            depart: p.start + spec.depart,
            travel_time,
            stops,
            braking: brakes,
            blocked: blocked.contains(&i),
        });
        journeys.push(Journey::new(id, samples));
    }
    journeys.sort_by(|a, b| a.id.cmp(&b.id));
    truths.sort_by(|a, b| a.id.cmp(&b.id));

    let records: Vec<MovementRecord> = truths
        .iter()
        .map(|t| MovementRecord { journey_id: t.id.clone(), origin: t.origin, dest: t.dest, travel_time: t.travel_time })
        .collect();
    let mut per: [Vec<f64>; 4] = Default::default();
    for t in &truths {
        for s in t.stops.iter().filter(|s| s.duration > DEFAULT_QUEUE_MIN_STOP_S) {
            per[t.origin.index()].push(s.distance_to_stop_bar);
        }
    }
    let queues = Direction::ALL
        .iter()
        .filter_map(|&d| {
            let v = &per[d.index()];
            mean_and_sample_std(v).map(|(mu, sigma)| QueueDistribution { approach: d, mu, sigma, n: v.len() })
        })
        .collect();
    let truth = Truth {
        intersection_id: p.intersection_id.clone(),
        window: TimeWindow::new(p.start, p.start + p.duration_s).map_err(|e| SynthError::Params(e.to_string()))?,
        mask_radius: MASK_RADIUS_M,
        queue_min_stop_s: DEFAULT_QUEUE_MIN_STOP_S,
        od: od_matrix(&records),
        travel_time: travel_time_matrix(&records),
        queues,
        journeys: truths,
        dropped,
    };
    Ok(SynthTrajectories { projection, journeys, truth })
}

impl SynthTrajectories {
    /// Journeys as WGS84 rows, ordered by journey and time.
    pub fn rows(&self) -> Vec<TrajectoryRow> {
        self.journeys
            .iter()
            .flat_map(|j| {
                j.samples.iter().map(|s| {
                    let g = self.projection.unproject(s.pos);
                    TrajectoryRow {
                        journey_id: j.id.clone(),
                        timestamp: s.t,
                        lat: g.lat,
                        lon: g.lon,
                        speed_mps: s.speed,
                        ignition: s.ignition,
                    }
                })
            })
            .collect()
    }

    /// Journeys re-expressed in another projection, e.g. the one a mask set
    /// was built in.
    pub fn journeys_in(&self, target: &Projection) -> Result<Vec<Journey>, SynthError> {
        self.journeys
            .iter()
            .map(|j| {
                let samples = j
                    .samples
                    .iter()
                    .map(|s| Ok(Sample { pos: target.project(self.projection.unproject(s.pos))?, ..s.clone() }))
                    .collect::<Result<Vec<_>, GeoError>>()?;
                Ok(Journey { samples, ..j.clone() })
            })
            .collect()
    }

    /// Road centerlines and the intersection point, ready for mask building.
    pub fn raw_features(&self, leg_length: f64) -> RawFeatures {
        let g = |x: f64, y: f64| self.projection.unproject(PlanarPoint::new(x, y));
        RawFeatures {
            lines: vec![vec![g(-leg_length, 0.0), g(leg_length, 0.0)], vec![g(0.0, -leg_length), g(0.0, leg_length)]],
            points: vec![(self.truth.intersection_id.clone(), self.projection.origin())],
        }
    }

    /// Road centerlines as a GeoJSON FeatureCollection of LineStrings.
    pub fn roads_geojson(&self, leg_length: f64) -> Value {
        let pt = |x: f64, y: f64| {
            let g = self.projection.unproject(PlanarPoint::new(x, y));
            json!([g.lon, g.lat])
        };
        let line = |name: &str, a: Value, b: Value| {
            json!({"type": "Feature", "properties": {"name": name}, "geometry": {"type": "LineString", "coordinates": [a, b]}})
        };
        json!({
            "type": "FeatureCollection",
            "features": [
                line("east-west", pt(-leg_length, 0.0), pt(leg_length, 0.0)),
                line("north-south", pt(0.0, -leg_length), pt(0.0, leg_length)),
            ]
        })
    }

    /// The intersection centre as a GeoJSON Point feature.
    pub fn intersections_geojson(&self) -> Value {
        let g = self.projection.origin();
        json!({
            "type": "FeatureCollection",
            "features": [{
                "type": "Feature",
                "properties": {"id": self.truth.intersection_id},
                "geometry": {"type": "Point", "coordinates": [g.lon, g.lat]}
            }]
        })
    }
}

fn default_bin() -> f64 {
    900.0
}

fn default_lanes() -> u32 {
    1
}

/// Detector-on events with exactly the requested count per phase and bin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AtspmSynth {
    #[serde(default)]
    pub seed: u64,
    pub intersection_id: String,
    /// Epoch seconds; must be a multiple of `bin_s`.
    pub start: f64,
    #[serde(default = "default_bin")]
    pub bin_s: f64,
    /// Detector-on counts per phase, one entry per consecutive bin.
    pub volumes: BTreeMap<u32, Vec<u64>>,
    /// Detectors per phase; detector ids are `10 * phase + lane`.
    #[serde(default = "default_lanes")]
    pub lanes: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthAtspm {
    pub events: Vec<AtspmEvent>,
    pub detector_map: BTreeMap<u32, u32>,
}

/// Each actuation is an on event (code 82) at a uniform time in its bin and
/// an off event (code 81) shortly after; counts cycle over the phase's lanes.
pub fn synth_atspm(p: &AtspmSynth) -> Result<SynthAtspm, SynthError> {
    if !(p.bin_s > 0.0) || !p.start.is_finite() || (p.start / p.bin_s).fract() != 0.0 {
        return Err(SynthError::Params("start must be a multiple of a positive bin width".into()));
    }
    if p.lanes == 0 || p.volumes.keys().any(|&ph| !(1..=8).contains(&ph)) {
        return Err(SynthError::Params("phases must be 1..8 with at least one lane".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let mut events = Vec::new();
    let mut detector_map = BTreeMap::new();
    for (&phase, counts) in &p.volumes {
        for lane in 1..=p.lanes {
            detector_map.insert(10 * phase + lane, phase);
        }
        for (b, &n) in counts.iter().enumerate() {
            let t0 = p.start + b as f64 * p.bin_s;
            for k in 0..n {
                let det = 10 * phase + 1 + (k % u64::from(p.lanes)) as u32;
                // millisecond resolution keeps events off the bin edges
                let t = t0 + (rng.random_range(0..(p.bin_s * 1000.0) as u64 - 1) as f64 + 0.5) / 1000.0;
                let on = AtspmEvent { intersection_id: p.intersection_id.clone(), t, event_code: DETECTOR_ON, parameter: det };
                events.push(AtspmEvent { t: t + 0.2, event_code: DETECTOR_ON - 1, ..on.clone() });
                events.push(on);
            }
        }
    }
    events.sort_by(|a, b| a.t.total_cmp(&b.t).then(a.parameter.cmp(&b.parameter)).then(a.event_code.cmp(&b.event_code)));
    Ok(SynthAtspm { events, detector_map })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NetworkKind {
    Single,
    Corridor,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkSynth {
    pub kind: NetworkKind,
    pub intersections: usize,
    pub spacing: f64,
    pub leg_length: f64,
    pub free_speed: f64,
    pub left_bay: Option<u32>,
}

impl Default for NetworkSynth {
    fn default() -> Self {
        Self { kind: NetworkKind::Single, intersections: 1, spacing: 400.0, leg_length: 300.0, free_speed: 15.0, left_bay: Some(6) }
    }
}

pub fn synth_network(p: &NetworkSynth) -> Result<Network, SynthError> {
    if !(p.leg_length > 0.0) || !(p.free_speed > 0.0) {
        return Err(SynthError::Params("leg length and free speed must be positive".into()));
    }
    let net = match p.kind {
        NetworkKind::Single => Network::single_intersection("I1", p.leg_length, p.free_speed, p.left_bay),
        NetworkKind::Corridor => {
            if p.intersections < 2 || !(p.spacing > 0.0) {
                return Err(SynthError::Params("a corridor needs at least two intersections and positive spacing".into()));
            }
            Network::corridor(p.intersections, p.spacing, p.leg_length, p.free_speed, p.left_bay)
        }
    };
    net.validate()?;
    Ok(net)
}

/// Route name for an approach and turn, as used by generated demand.
pub fn route_name(d: Direction, t: Turn) -> String {
    format!("{d}-{}", turn_name(t))
}
