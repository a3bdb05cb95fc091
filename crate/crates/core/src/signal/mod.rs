//! Fixed-time dual-ring, two-barrier signal plans: validation, compilation
//! into a cyclic state timeline and export as a traffic-light program.

mod tls;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use tls::{emit_tls_program, parse_tls_program, TlsPhase};

use crate::masks::Direction;

pub const DEFAULT_YELLOW_S: f64 = 4.0;
pub const DEFAULT_ALL_RED_S: f64 = 2.0;
pub const MIN_YELLOW_S: f64 = 3.0;
const TIME_EPS: f64 = 1e-9;

pub const RING1: [u8; 4] = [1, 2, 3, 4];
pub const RING2: [u8; 4] = [5, 6, 7, 8];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SignalError {
    #[error("plan is invalid: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    InvalidPlan(Vec<Violation>),
    #[error("phase {0} has no signal heads in the movement map")]
    UnmappedPhase(u8),
    #[error("signal head {head} is assigned to phases {first} and {second}")]
    SharedHead { head: usize, first: u8, second: u8 },
    #[error("malformed traffic-light program: {0}")]
    Parse(String),
}

/// Which barrier group a phase belongs to: 0 for {1,2,5,6}, 1 for {3,4,7,8}.
pub fn barrier_of(phase: u8) -> usize {
    usize::from(matches!(phase, 3 | 4 | 7 | 8))
}

/// 1 for phases 1–4, 2 for 5–8.
pub fn ring_of(phase: u8) -> usize {
    if phase <= 4 {
        1
    } else {
        2
    }
}

fn default_yellow() -> f64 {
    DEFAULT_YELLOW_S
}

fn default_all_red() -> f64 {
    DEFAULT_ALL_RED_S
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseSpec {
    pub phase: u8,
    pub min_green: f64,
    pub max_green: f64,
    #[serde(default = "default_yellow")]
    pub yellow: f64,
    #[serde(default = "default_all_red")]
    pub all_red: f64,
}

impl PhaseSpec {
    pub fn new(phase: u8, min_green: f64, max_green: f64) -> Self {
        Self { phase, min_green, max_green, yellow: DEFAULT_YELLOW_S, all_red: DEFAULT_ALL_RED_S }
    }

    pub fn clearance(&self) -> f64 {
        self.yellow + self.all_red
    }
}

fn default_ring1() -> Vec<u8> {
    RING1.to_vec()
}

fn default_ring2() -> Vec<u8> {
    RING2.to_vec()
}

/// A fixed-time plan. `splits[i]` is the green time of phase `i + 1`. Ring
/// sequences may swap the two phases inside a barrier (lead/lag) but must
/// keep each ring's phases and the barrier order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RingBarrierPlan {
    pub phases: Vec<PhaseSpec>,
    pub splits: Vec<f64>,
    pub cycle_length: f64,
    #[serde(default = "default_ring1")]
    pub ring1: Vec<u8>,
    #[serde(default = "default_ring2")]
    pub ring2: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    BadPhaseSpec { phase: u8, reason: String },
    SplitBelowMin { phase: u8, split: f64, min_green: f64 },
    SplitAboveMax { phase: u8, split: f64, max_green: f64 },
    RingSum { ring: usize, total: f64, cycle_length: f64 },
    BarrierDesync { barrier: usize, ring1: f64, ring2: f64 },
    ConflictingGreens { ring: usize, reason: String },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::BadPhaseSpec { phase, reason } => write!(f, "phase {phase}: {reason}"),
            Violation::SplitBelowMin { phase, split, min_green } => {
                write!(f, "phase {phase}: split {split} s below min green {min_green} s")
            }
            Violation::SplitAboveMax { phase, split, max_green } => {
                write!(f, "phase {phase}: split {split} s above max green {max_green} s")
            }
            Violation::RingSum { ring, total, cycle_length } => {
                write!(f, "ring {ring}: phases total {total} s, cycle is {cycle_length} s")
            }
            Violation::BarrierDesync { barrier, ring1, ring2 } => {
                write!(f, "barrier group {}: ring 1 side {ring1} s, ring 2 side {ring2} s", ["A", "B"][*barrier])
            }
            Violation::ConflictingGreens { ring, reason } => write!(f, "ring {ring}: {reason}"),
        }
    }
}

impl RingBarrierPlan {
    /// Plan with the standard ring order and default clearances.
    pub fn new(phases: Vec<PhaseSpec>, splits: Vec<f64>, cycle_length: f64) -> Self {
        Self { phases, splits, cycle_length, ring1: default_ring1(), ring2: default_ring2() }
    }

    pub fn spec(&self, phase: u8) -> Option<&PhaseSpec> {
        self.phases.iter().find(|p| p.phase == phase)
    }

    pub fn split(&self, phase: u8) -> f64 {
        self.splits.get(usize::from(phase).wrapping_sub(1)).copied().unwrap_or(0.0)
    }

    fn phase_total(&self, phase: u8) -> f64 {
        self.split(phase) + self.spec(phase).map_or(0.0, PhaseSpec::clearance)
    }

    fn side(&self, ring: &[u8], barrier: usize) -> f64 {
        ring.iter().filter(|&&p| barrier_of(p) == barrier).map(|&p| self.phase_total(p)).sum()
    }

    pub fn ring(&self, ring: usize) -> &[u8] {
        if ring == 1 {
            &self.ring1
        } else {
            &self.ring2
        }
    }
}

fn check_sequence(seq: &[u8], ring: usize, out: &mut Vec<Violation>) -> bool {
    let expected: &[u8] = if ring == 1 { &RING1 } else { &RING2 };
    let mut sorted = seq.to_vec();
    sorted.sort_unstable();
    if sorted != expected {
        let foreign: Vec<u8> = seq.iter().copied().filter(|p| !expected.contains(p)).collect();
        let reason = if foreign.is_empty() {
            format!("sequence {seq:?} must list phases {expected:?} once each")
        } else {
            format!("phases {foreign:?} belong to the other ring and would show green with it")
        };
        out.push(Violation::ConflictingGreens { ring, reason });
        return false;
    }
    let barriers: Vec<usize> = seq.iter().map(|&p| barrier_of(p)).collect();
    if barriers != [0, 0, 1, 1] {
        out.push(Violation::ConflictingGreens {
            ring,
            reason: format!("sequence {seq:?} crosses a barrier mid-group, running phases against the other ring's barrier group"),
        });
        return false;
    }
    true
}

/// Every invariant breach of `plan`, or `Ok` when there are none.
pub fn validate_plan(plan: &RingBarrierPlan) -> Result<(), Vec<Violation>> {
    let mut v = Vec::new();
    for phase in 1..=8u8 {
        let matching: Vec<&PhaseSpec> = plan.phases.iter().filter(|p| p.phase == phase).collect();
        match matching.as_slice() {
            [] => v.push(Violation::BadPhaseSpec { phase, reason: "missing".into() }),
            [_, _, ..] => v.push(Violation::BadPhaseSpec { phase, reason: "defined more than once".into() }),
            [s] => {
                let finite = [s.min_green, s.max_green, s.yellow, s.all_red].iter().all(|x| x.is_finite());
                if !finite || !(s.min_green > 0.0) || s.min_green > s.max_green {
                    v.push(Violation::BadPhaseSpec { phase, reason: "need 0 < min_green <= max_green".into() });
                }
                if !(s.yellow >= MIN_YELLOW_S) {
                    v.push(Violation::BadPhaseSpec { phase, reason: format!("yellow {} s below {MIN_YELLOW_S} s", s.yellow) });
                }
                if !(s.all_red >= 0.0) {
                    v.push(Violation::BadPhaseSpec { phase, reason: "negative all-red".into() });
                }
            }
        }
    }
    for p in &plan.phases {
        if !(1..=8).contains(&p.phase) {
            v.push(Violation::BadPhaseSpec { phase: p.phase, reason: "phase number outside 1..8".into() });
        }
    }
    if plan.splits.len() != 8 {
        v.push(Violation::BadPhaseSpec { phase: 0, reason: format!("expected 8 splits, got {}", plan.splits.len()) });
        return Err(v);
    }
    for phase in 1..=8u8 {
        let split = plan.split(phase);
        if let Some(s) = plan.spec(phase) {
            if !(split >= s.min_green - TIME_EPS) {
                v.push(Violation::SplitBelowMin { phase, split, min_green: s.min_green });
            }
            if !(split <= s.max_green + TIME_EPS) {
                v.push(Violation::SplitAboveMax { phase, split, max_green: s.max_green });
            }
        }
    }
    let ok1 = check_sequence(&plan.ring1, 1, &mut v);
    let ok2 = check_sequence(&plan.ring2, 2, &mut v);
    for ring in [1, 2] {
        let total: f64 = plan.ring(ring).iter().map(|&p| plan.phase_total(p)).sum();
        if (total - plan.cycle_length).abs() > TIME_EPS * plan.cycle_length.abs().max(1.0) || !total.is_finite() {
            v.push(Violation::RingSum { ring, total, cycle_length: plan.cycle_length });
        }
    }
    if ok1 && ok2 {
        for barrier in [0, 1] {
            let (a, b) = (plan.side(&plan.ring1, barrier), plan.side(&plan.ring2, barrier));
            if (a - b).abs() > TIME_EPS * a.abs().max(1.0) {
                v.push(Violation::BarrierDesync { barrier, ring1: a, ring2: b });
            }
        }
    }
    if v.is_empty() {
        Ok(())
    } else {
        Err(v)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PhaseState {
    G,
    Y,
    R,
}

/// One constant-state stretch of the cycle. `states[i]` is phase `i + 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub start: f64,
    pub duration: f64,
    pub states: [PhaseState; 8],
}

impl Interval {
    pub fn state(&self, phase: u8) -> PhaseState {
        self.states[usize::from(phase) - 1]
    }

    pub fn greens(&self) -> Vec<u8> {
        (1..=8).filter(|&p| self.state(p) == PhaseState::G).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalTimeline {
    pub cycle_length: f64,
    pub intervals: Vec<Interval>,
}

/// (start, end, phase, state) pieces of one ring over a cycle.
fn ring_pieces(plan: &RingBarrierPlan, ring: &[u8]) -> Vec<(f64, f64, u8, PhaseState)> {
    let mut t = 0.0;
    let mut out = Vec::new();
    for &p in ring {
        let s = plan.spec(p).expect("validated");
        for (d, st) in [(plan.split(p), PhaseState::G), (s.yellow, PhaseState::Y), (s.all_red, PhaseState::R)] {
            if d > 0.0 {
                out.push((t, t + d, p, st));
                t += d;
            }
        }
    }
    out
}

fn ring_state_at(pieces: &[(f64, f64, u8, PhaseState)], t: f64, states: &mut [PhaseState; 8]) {
    if let Some(&(_, _, p, st)) = pieces.iter().find(|(a, b, _, _)| t >= *a && t < *b) {
        states[usize::from(p) - 1] = st;
    }
}

/// Merges both rings' breakpoints into one cyclic sequence of intervals.
pub fn compile_plan(plan: &RingBarrierPlan) -> Result<SignalTimeline, SignalError> {
    validate_plan(plan).map_err(SignalError::InvalidPlan)?;
    let r1 = ring_pieces(plan, &plan.ring1);
    let r2 = ring_pieces(plan, &plan.ring2);
    let mut cuts: Vec<f64> = r1.iter().chain(&r2).flat_map(|(a, b, _, _)| [*a, *b]).collect();
    cuts.push(0.0);
    cuts.push(plan.cycle_length);
    cuts.sort_by(f64::total_cmp);
    cuts.dedup_by(|b, a| (*b - *a).abs() <= TIME_EPS);
    // snap the final cut to the exact cycle length
    if let Some(last) = cuts.last_mut() {
        *last = plan.cycle_length;
    }
    let mut intervals = Vec::new();
    for w in cuts.windows(2) {
        let mid = 0.5 * (w[0] + w[1]);
        let mut states = [PhaseState::R; 8];
        ring_state_at(&r1, mid, &mut states);
        ring_state_at(&r2, mid, &mut states);
        intervals.push(Interval { start: w[0], duration: w[1] - w[0], states });
    }
    Ok(SignalTimeline { cycle_length: plan.cycle_length, intervals })
}

impl SignalTimeline {
    /// Index of the interval holding `t` (taken modulo the cycle). A
    /// boundary instant belongs to the interval that starts there.
    pub fn interval_index(&self, t: f64) -> usize {
        let u = t.rem_euclid(self.cycle_length);
        let i = self.intervals.partition_point(|iv| iv.start <= u);
        i.saturating_sub(1)
    }

    pub fn state_at(&self, t: f64) -> [PhaseState; 8] {
        self.intervals[self.interval_index(t)].states
    }

    pub fn phase_state_at(&self, phase: u8, t: f64) -> PhaseState {
        self.state_at(t)[usize::from(phase) - 1]
    }

    /// Total time per cycle that `phase` spends in `state`.
    pub fn time_in(&self, phase: u8, state: PhaseState) -> f64 {
        self.intervals.iter().filter(|iv| iv.state(phase) == state).map(|iv| iv.duration).sum()
    }

    /// Green windows of `phase` within one cycle, as (start, end).
    pub fn green_windows(&self, phase: u8) -> Vec<(f64, f64)> {
        let mut out: Vec<(f64, f64)> = Vec::new();
        for iv in &self.intervals {
            if iv.state(phase) == PhaseState::G {
                let end = iv.start + iv.duration;
                match out.last_mut() {
                    Some(last) if (last.1 - iv.start).abs() <= TIME_EPS => last.1 = end,
                    _ => out.push((iv.start, end)),
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Turn {
    Left,
    Through,
    Right,
}

/// Standard numbering with the main street east-west: even phases carry
/// through and right movements, odd phases the opposing lefts.
pub fn default_phase_movements() -> BTreeMap<u8, Vec<(Direction, Turn)>> {
    use Direction::*;
    use Turn::*;
    BTreeMap::from([
        (1, vec![(WB, Left)]),
        (2, vec![(EB, Through), (EB, Right)]),
        (3, vec![(SB, Left)]),
        (4, vec![(NB, Through), (NB, Right)]),
        (5, vec![(EB, Left)]),
        (6, vec![(WB, Through), (WB, Right)]),
        (7, vec![(NB, Left)]),
        (8, vec![(SB, Through), (SB, Right)]),
    ])
}

/// Phase serving an approach movement under [`default_phase_movements`].
pub fn default_phase_for(approach: Direction, turn: Turn) -> u8 {
    default_phase_movements()
        .into_iter()
        .find(|(_, m)| m.contains(&(approach, turn)))
        .map(|(p, _)| p)
        .expect("every approach movement is mapped")
}

/// Signal-head indices per phase for the default movement order:
/// heads are numbered approach by approach (NB, SB, EB, WB), each with
/// left, through and right.
pub fn default_head_map() -> BTreeMap<u8, Vec<usize>> {
    let mut out: BTreeMap<u8, Vec<usize>> = BTreeMap::new();
    for (a, approach) in Direction::ALL.iter().enumerate() {
        for (k, turn) in [Turn::Left, Turn::Through, Turn::Right].iter().enumerate() {
            out.entry(default_phase_for(*approach, *turn)).or_default().push(3 * a + k);
        }
    }
    out
}
