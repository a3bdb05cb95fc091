//! Demand calibration and simulation backends: route sampling, speed-factor
//! fitting, a deterministic queue-discharge simulator and an adapter for an
//! external microsimulator process.

mod demand;
mod external;
mod toy;

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use demand::{
    fit_speed_factor, largest_remainder, sample_routes, ApproachDemand, ArrivalProcess, Demand, SpeedFactorModel,
    VehicleSpec, SPEED_FACTOR_MAX, SPEED_FACTOR_MIN,
};
pub use external::{parse_tripinfo, run_external, write_routes_xml, ExternalRun};
pub use toy::{run_toy_sim, IntersectionControl, ToyParams};

use crate::masks::Direction;
use crate::signal::{default_phase_for, Turn};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("network: {0}")]
    Network(String),
    #[error("vehicle {vehicle:?}: {reason}")]
    Route { vehicle: String, reason: String },
    #[error("{0}")]
    Demand(String),
    #[error("no signal timeline for intersection {0:?}")]
    MissingTimeline(String),
    #[error("invalid parameter: {0}")]
    Params(String),
    #[error("backend exited with {code:?}: {output}")]
    Backend { code: Option<i32>, output: String },
    #[error("backend timed out after {0} s")]
    Timeout(f64),
    #[error("cannot parse backend output: {0}")]
    Parse(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Link {
    pub id: String,
    pub length: f64,
    pub free_speed: f64,
    /// Vehicles the exclusive left-turn bay at the downstream end holds;
    /// absent means unlimited.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub left_turn_buffer_capacity: Option<u32>,
}

impl Link {
    pub fn free_flow_time(&self, speed_factor: f64) -> f64 {
        self.length / (self.free_speed * speed_factor)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Movement {
    pub id: String,
    pub intersection: String,
    pub from_link: String,
    /// `None` when vehicles leave the network after discharging.
    #[serde(default)]
    pub to_link: Option<String>,
    pub approach: Direction,
    pub turn: Turn,
    pub phase: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    pub intersections: Vec<String>,
    pub links: Vec<Link>,
    pub movements: Vec<Movement>,
    /// Named movement sequences vehicles can be assigned to.
    #[serde(default)]
    pub routes: BTreeMap<String, Vec<String>>,
    /// Routes whose travel times make up the corridor metric; empty means all.
    #[serde(default)]
    pub corridor_routes: Vec<String>,
}

/// Travel direction after a turn.
pub fn turned(d: Direction, turn: Turn) -> Direction {
    use Direction::*;
    match (turn, d) {
        (Turn::Through, d) => d,
        (Turn::Left, NB) => WB,
        (Turn::Left, WB) => SB,
        (Turn::Left, SB) => EB,
        (Turn::Left, EB) => NB,
        (Turn::Right, NB) => EB,
        (Turn::Right, EB) => SB,
        (Turn::Right, SB) => WB,
        (Turn::Right, WB) => NB,
    }
}

pub fn turn_name(t: Turn) -> &'static str {
    match t {
        Turn::Left => "left",
        Turn::Through => "through",
        Turn::Right => "right",
    }
}

const TURNS: [Turn; 3] = [Turn::Left, Turn::Through, Turn::Right];

impl Network {
    pub fn link(&self, id: &str) -> Option<&Link> {
        self.links.iter().find(|l| l.id == id)
    }

    pub fn movement(&self, id: &str) -> Option<&Movement> {
        self.movements.iter().find(|m| m.id == id)
    }

    /// Checks link lengths and speeds, movement references, route
    /// connectivity and id uniqueness.
    pub fn validate(&self) -> Result<(), SimError> {
        let err = |m: String| Err(SimError::Network(m));
        let mut seen = BTreeSet::new();
        for l in &self.links {
            if !seen.insert(l.id.as_str()) {
                return err(format!("duplicate link {:?}", l.id));
            }
            if !(l.length > 0.0) || !l.length.is_finite() {
                return err(format!("link {:?} length must be positive", l.id));
            }
            if !(l.free_speed > 0.0) || !l.free_speed.is_finite() {
                return err(format!("link {:?} free speed must be positive", l.id));
            }
        }
        let mut seen = BTreeSet::new();
        for m in &self.movements {
            if !seen.insert(m.id.as_str()) {
                return err(format!("duplicate movement {:?}", m.id));
            }
            if !self.intersections.contains(&m.intersection) {
                return err(format!("movement {:?} references unknown intersection {:?}", m.id, m.intersection));
            }
            if self.link(&m.from_link).is_none() {
                return err(format!("movement {:?} references unknown link {:?}", m.id, m.from_link));
            }
            if let Some(to) = &m.to_link {
                if self.link(to).is_none() {
                    return err(format!("movement {:?} references unknown link {to:?}", m.id));
                }
            }
            if !(1..=8).contains(&m.phase) {
                return err(format!("movement {:?} has phase {} outside 1..8", m.id, m.phase));
            }
        }
        for (name, route) in &self.routes {
            self.check_route(route).map_err(|reason| SimError::Network(format!("route {name:?}: {reason}")))?;
        }
        for r in &self.corridor_routes {
            if !self.routes.contains_key(r) {
                return err(format!("corridor route {r:?} is not defined"));
            }
        }
        Ok(())
    }

    /// Ok when every movement exists and each feeds the next.
    pub fn check_route(&self, route: &[String]) -> Result<(), String> {
        if route.is_empty() {
            return Err("empty route".into());
        }
        let mut prev: Option<&Movement> = None;
        for id in route {
            let m = self.movement(id).ok_or_else(|| format!("missing movement {id:?}"))?;
            if let Some(p) = prev {
                if p.to_link.as_deref() != Some(m.from_link.as_str()) {
                    return Err(format!("movement {:?} does not feed {:?}", p.id, m.id));
                }
            }
            prev = Some(m);
        }
        Ok(())
    }

    /// Link ids a route drives over, in order.
    pub fn route_edges(&self, route: &[String]) -> Vec<String> {
        let mut out = Vec::new();
        for (k, id) in route.iter().enumerate() {
            if let Some(m) = self.movement(id) {
                if k == 0 {
                    out.push(m.from_link.clone());
                }
                if let Some(to) = &m.to_link {
                    out.push(to.clone());
                }
            }
        }
        out
    }

    /// One four-leg intersection: inbound links `{id}:in:{dir}` and outbound
    /// links `{id}:out:{dir}` of `leg_length`, twelve movements on the
    /// standard phase numbering, and routes named `{dir}-{turn}`.
    pub fn single_intersection(id: &str, leg_length: f64, free_speed: f64, left_bay: Option<u32>) -> Network {
        let mut links = Vec::new();
        let mut movements = Vec::new();
        let mut routes = BTreeMap::new();
        for d in Direction::ALL {
            links.push(Link {
                id: format!("{id}:in:{d}"),
                length: leg_length,
                free_speed,
                left_turn_buffer_capacity: left_bay,
            });
            links.push(Link { id: format!("{id}:out:{d}"), length: leg_length, free_speed, left_turn_buffer_capacity: None });
        }
        for d in Direction::ALL {
            for t in TURNS {
                let mid = format!("{id}:{d}:{}", turn_name(t));
                movements.push(Movement {
                    id: mid.clone(),
                    intersection: id.to_string(),
                    from_link: format!("{id}:in:{d}"),
                    to_link: Some(format!("{id}:out:{}", turned(d, t))),
                    approach: d,
                    turn: t,
                    phase: default_phase_for(d, t),
                });
                routes.insert(format!("{d}-{}", turn_name(t)), vec![mid]);
            }
        }
        Network { intersections: vec![id.to_string()], links, movements, routes, corridor_routes: Vec::new() }
    }

    /// East-west arterial through `n` intersections `I1..In` spaced
    /// `spacing` apart, with side-street legs of `leg_length`. Routes:
    /// `EB-through` and `WB-through` cover the whole corridor (these form the
    /// corridor metric); `I{k}:{dir}-{turn}` enter at one intersection and
    /// leave at the next exit.
    pub fn corridor(n: usize, spacing: f64, leg_length: f64, free_speed: f64, left_bay: Option<u32>) -> Network {
        use Direction::*;
        let name = |k: usize| format!("I{k}");
        let mut links = Vec::new();
        let mut link = |id: String, length: f64, bay: Option<u32>| {
            links.push(Link { id, length, free_speed, left_turn_buffer_capacity: bay });
        };
        // inbound link of intersection k for travel direction d
        let inbound = |k: usize, d: Direction| -> String {
            match d {
                EB if k > 1 => format!("I{}-I{k}", k - 1),
                WB if k < n => format!("I{}-I{k}", k + 1),
                _ => format!("I{k}:in:{d}"),
            }
        };
        let outbound = |k: usize, d: Direction| -> String {
            match d {
                EB if k < n => format!("I{k}-I{}", k + 1),
                WB if k > 1 => format!("I{k}-I{}", k - 1),
                _ => format!("I{k}:out:{d}"),
            }
        };
        for k in 1..=n {
            for d in Direction::ALL {
                let id = inbound(k, d);
                let internal = id.contains('-');
                link(id, if internal { spacing } else { leg_length }, left_bay);
                let out = outbound(k, d);
                if !out.contains('-') {
                    link(out, leg_length, None);
                }
            }
        }
        let mut movements = Vec::new();
        let mut routes = BTreeMap::new();
        for k in 1..=n {
            for d in Direction::ALL {
                for t in TURNS {
                    let mid = format!("{}:{d}:{}", name(k), turn_name(t));
                    let out_dir = turned(d, t);
                    movements.push(Movement {
                        id: mid.clone(),
                        intersection: name(k),
                        from_link: inbound(k, d),
                        to_link: Some(outbound(k, out_dir)),
                        approach: d,
                        turn: t,
                        phase: default_phase_for(d, t),
                    });
                }
            }
        }
        let mut net = Network { intersections: (1..=n).map(name).collect(), links, movements, routes: BTreeMap::new(), corridor_routes: Vec::new() };
        // follow movements from each entry link until the vehicle leaves
        for k in 1..=n {
            for d in Direction::ALL {
                let entry = inbound(k, d);
                if entry.contains('-') {
                    continue;
                }
                for t in TURNS {
                    let mut route = vec![format!("{}:{d}:{}", name(k), turn_name(t))];
                    let mut cur = net.movement(&route[0]).cloned().expect("just built");
                    while let Some(next) = cur.to_link.as_ref().and_then(|l| {
                        net.movements.iter().find(|m| &m.from_link == l && m.turn == Turn::Through).cloned()
                    }) {
                        route.push(next.id.clone());
                        cur = next;
                    }
                    routes.insert(format!("{}:{d}-{}", name(k), turn_name(t)), route);
                }
            }
        }
        let eb = routes.get("I1:EB-through").cloned().unwrap_or_default();
        let wb = routes.get(&format!("I{n}:WB-through")).cloned().unwrap_or_default();
        routes.insert("EB-through".into(), eb);
        routes.insert("WB-through".into(), wb);
        net.routes = routes;
        net.corridor_routes = vec!["EB-through".into(), "WB-through".into()];
        net
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VehicleResult {
    pub id: String,
    pub depart: f64,
    /// `None` when the vehicle had not left the network by the horizon.
    pub arrive: Option<f64>,
    pub travel_time: Option<f64>,
    pub stops: u32,
    pub delay: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Aggregates {
    pub injected: usize,
    pub throughput: usize,
    pub incomplete: usize,
    pub mean_corridor_travel_time: Option<f64>,
    pub mean_travel_time: Option<f64>,
    pub p95_travel_time: Option<f64>,
    pub mean_delay: Option<f64>,
    /// Mean queue delay per `{intersection}:{approach}`.
    pub mean_delay_by_approach: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub scenario_id: String,
    pub vehicles: Vec<VehicleResult>,
    pub aggregates: Aggregates,
}

fn mean(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

/// Nearest-rank 95th percentile.
fn p95(v: &[f64]) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let rank = ((0.95 * s.len() as f64).ceil() as usize).clamp(1, s.len());
    Some(s[rank - 1])
}

impl RunResult {
    /// Builds aggregates from per-vehicle rows. `corridor` selects the
    /// vehicles behind the corridor travel-time metric (all when `None`).
    pub fn from_vehicles(
        scenario_id: &str,
        vehicles: Vec<VehicleResult>,
        corridor: Option<&BTreeSet<String>>,
        approach_delays: BTreeMap<String, Vec<f64>>,
    ) -> RunResult {
        let completed: Vec<&VehicleResult> = vehicles.iter().filter(|v| v.arrive.is_some()).collect();
        let tts: Vec<f64> = completed.iter().filter_map(|v| v.travel_time).collect();
        let corridor_tts: Vec<f64> = completed
            .iter()
            .filter(|v| corridor.is_none_or(|c| c.contains(&v.id)))
            .filter_map(|v| v.travel_time)
            .collect();
        let delays: Vec<f64> = completed.iter().map(|v| v.delay).collect();
        let aggregates = Aggregates {
            injected: vehicles.len(),
            throughput: completed.len(),
            incomplete: vehicles.len() - completed.len(),
            mean_corridor_travel_time: mean(&corridor_tts),
            mean_travel_time: mean(&tts),
            p95_travel_time: p95(&tts),
            mean_delay: mean(&delays),
            mean_delay_by_approach: approach_delays.into_iter().filter_map(|(k, v)| mean(&v).map(|m| (k, m))).collect(),
        };
        RunResult { scenario_id: scenario_id.to_string(), vehicles, aggregates }
    }
}
