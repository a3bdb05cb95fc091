use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};

use serde::{Deserialize, Serialize};

use super::{Network, RunResult, SimError, VehicleResult, VehicleSpec};
use crate::signal::{SignalTimeline, Turn};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ToyParams {
    /// Seconds between successive discharges from one queue.
    pub saturation_headway: f64,
    /// Dead time at the start of every green before the first discharge.
    pub startup_lost_time: f64,
    /// Vehicles still in the network after this time are incomplete.
    pub horizon_end: f64,
}

impl Default for ToyParams {
    fn default() -> Self {
        Self { saturation_headway: 2.0, startup_lost_time: 2.0, horizon_end: 3600.0 }
    }
}

/// Timeline of one intersection, shifted so its cycle starts at `offset`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntersectionControl {
    pub timeline: SignalTimeline,
    #[serde(default)]
    pub offset: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Event {
    t: f64,
    seq: u64,
    vehicle: usize,
    step: usize,
}

impl Eq for Event {}

impl Ord for Event {
    fn cmp(&self, other: &Self) -> Ordering {
        // reversed for a min-heap
        other.t.total_cmp(&self.t).then_with(|| other.seq.cmp(&self.seq))
    }
}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

struct Server {
    windows: Vec<(f64, f64)>,
    cycle: f64,
    offset: f64,
}

impl Server {
    /// Earliest time at or after `t0` inside a green window and at least the
    /// startup lost time past that window's onset.
    fn next_slot(&self, t0: f64, lost: f64) -> f64 {
        let k0 = ((t0 - self.offset) / self.cycle).floor();
        for k in 0..3 {
            let base = self.offset + (k0 + k as f64) * self.cycle;
            for &(s, e) in &self.windows {
                let (g0, g1) = (base + s, base + e);
                let c = t0.max(g0 + lost);
                if c < g1 {
                    return c;
                }
            }
        }
        f64::INFINITY
    }
}

struct Trip {
    result: VehicleResult,
    done: bool,
}

/// Event-driven queue model. Each vehicle drives every link of its route at
/// free speed times its speed factor, then waits in its movement's FIFO
/// queue. Queues discharge only on green: the first vehicle no earlier than
/// the startup lost time after onset, later ones one saturation headway
/// apart. A left turner finding the bay full waits in the through lane and
/// holds up every through or right turner arriving behind it until a bay
/// slot frees.
pub fn run_toy_sim(
    scenario_id: &str,
    network: &Network,
    controls: &BTreeMap<String, IntersectionControl>,
    vehicles: &[VehicleSpec],
    params: &ToyParams,
) -> Result<RunResult, SimError> {
    if !(params.saturation_headway > 0.0) || !(params.startup_lost_time >= 0.0) || !params.horizon_end.is_finite() {
        return Err(SimError::Params(format!("bad simulation parameters {params:?}")));
    }
    network.validate()?;
    for i in &network.intersections {
        let c = controls.get(i).ok_or_else(|| SimError::MissingTimeline(i.clone()))?;
        if !(c.timeline.cycle_length > 0.0) || !c.offset.is_finite() {
            return Err(SimError::Params(format!("intersection {i:?} has a degenerate timeline")));
        }
    }
    let mut seen = BTreeSet::new();
    for v in vehicles {
        let fail = |reason: String| Err(SimError::Route { vehicle: v.id.clone(), reason });
        if !seen.insert(v.id.as_str()) {
            return fail("duplicate vehicle id".into());
        }
        if let Err(reason) = network.check_route(&v.route) {
            return fail(reason);
        }
        if !(v.speed_factor > 0.0) || !v.speed_factor.is_finite() {
            return fail(format!("speed factor {} must be positive", v.speed_factor));
        }
        if !v.depart.is_finite() || v.depart > params.horizon_end {
            return fail(format!("departure {} outside the horizon", v.depart));
        }
    }

    let movement_index: BTreeMap<&str, usize> =
        network.movements.iter().enumerate().map(|(i, m)| (m.id.as_str(), i)).collect();
    let servers: Vec<Server> = network
        .movements
        .iter()
        .map(|m| {
            let c = &controls[&m.intersection];
            Server { windows: c.timeline.green_windows(m.phase), cycle: c.timeline.cycle_length, offset: c.offset }
        })
        .collect();
    let link_len: BTreeMap<&str, (f64, f64, Option<u32>)> = network
        .links
        .iter()
        .map(|l| (l.id.as_str(), (l.length, l.free_speed, l.left_turn_buffer_capacity)))
        .collect();
    let travel = |link: &str, factor: f64| {
        let (len, speed, _) = link_len[link];
        len / (speed * factor)
    };

    let routes: Vec<Vec<usize>> =
        vehicles.iter().map(|v| v.route.iter().map(|id| movement_index[id.as_str()]).collect()).collect();
    let mut trips: Vec<Trip> = vehicles
        .iter()
        .map(|v| Trip {
            result: VehicleResult { id: v.id.clone(), depart: v.depart, arrive: None, travel_time: None, stops: 0, delay: 0.0 },
            done: false,
        })
        .collect();

    let mut order: Vec<usize> = (0..vehicles.len()).collect();
    order.sort_by(|&a, &b| vehicles[a].depart.total_cmp(&vehicles[b].depart).then_with(|| vehicles[a].id.cmp(&vehicles[b].id)));
    let mut heap = BinaryHeap::new();
    let mut seq = 0u64;
    for &v in &order {
        let first = &network.movements[routes[v][0]];
        heap.push(Event { t: vehicles[v].depart + travel(&first.from_link, vehicles[v].speed_factor), seq, vehicle: v, step: 0 });
        seq += 1;
    }

    let n_mov = network.movements.len();
    let mut last_discharge = vec![f64::NEG_INFINITY; n_mov];
    let mut left_discharges: Vec<Vec<f64>> = vec![Vec::new(); n_mov];
    let mut lane_blocked_until: BTreeMap<&str, f64> = BTreeMap::new();
    let mut approach_delays: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    let (h, lost) = (params.saturation_headway, params.startup_lost_time);

    while let Some(ev) = heap.pop() {
        if ev.t > params.horizon_end {
            continue;
        }
        let mi = routes[ev.vehicle][ev.step];
        let m = &network.movements[mi];
        let mut ready = ev.t;
        let mut no_bay = false;
        if m.turn == Turn::Left {
            if let Some(cap) = link_len[m.from_link.as_str()].2 {
                let queued = &left_discharges[mi];
                let cap = cap as usize;
                no_bay = cap == 0;
                if cap > 0 && queued.len() >= cap {
                    let frees = queued[queued.len() - cap];
                    if frees > ready {
                        ready = frees;
                        let b = lane_blocked_until.entry(m.from_link.as_str()).or_insert(f64::NEG_INFINITY);
                        *b = b.max(frees);
                    }
                }
            }
        } else if let Some(&b) = lane_blocked_until.get(m.from_link.as_str()) {
            ready = ready.max(b);
        }
        let d = servers[mi].next_slot(ready.max(last_discharge[mi] + h), lost);
        last_discharge[mi] = d;
        if m.turn == Turn::Left {
            left_discharges[mi].push(d);
        }
        if no_bay {
            let b = lane_blocked_until.entry(m.from_link.as_str()).or_insert(f64::NEG_INFINITY);
            *b = b.max(d);
        }
        let wait = d - ev.t;
        let trip = &mut trips[ev.vehicle];
        trip.result.delay += wait;
        if wait > 1e-9 {
            trip.result.stops += 1;
        }
        approach_delays.entry(format!("{}:{}", m.intersection, m.approach)).or_default().push(wait);
        if d > params.horizon_end {
            continue;
        }
        let factor = vehicles[ev.vehicle].speed_factor;
        let exit_link_time = m.to_link.as_deref().map_or(0.0, |l| travel(l, factor));
        if ev.step + 1 < routes[ev.vehicle].len() {
            heap.push(Event { t: d + exit_link_time, seq, vehicle: ev.vehicle, step: ev.step + 1 });
            seq += 1;
        } else {
            let arrive = d + exit_link_time;
            if arrive <= params.horizon_end {
                trip.result.arrive = Some(arrive);
                trip.result.travel_time = Some(arrive - trip.result.depart);
                trip.done = true;
            }
        }
    }

    let corridor: Option<BTreeSet<String>> = (!network.corridor_routes.is_empty()).then(|| {
        vehicles.iter().filter(|v| network.corridor_routes.contains(&v.route_name)).map(|v| v.id.clone()).collect()
    });
    let results = trips
        .into_iter()
        .map(|t| {
            debug_assert_eq!(t.done, t.result.arrive.is_some());
            t.result
        })
        .collect();
    Ok(RunResult::from_vehicles(scenario_id, results, corridor.as_ref(), approach_delays))
}
