//! Descriptive metrics over clipped journeys: stops, turning movements,
//! origin-destination and travel-time tables, queue-length fits and hard
//! braking.

mod report;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use report::{analyze_intersection, AnalysisOptions, AnalysisReport, CellStat};

use crate::geo::{point_segment_distance, PlanarPoint};
use crate::masks::{Direction, Mask};
use crate::trajectory::Journey;

pub const STANDARD_GRAVITY: f64 = 9.80665;
pub const DEFAULT_STOP_SPEED_MPS: f64 = 1.0;
pub const DEFAULT_MIN_STOP_S: f64 = 3.0;
pub const DEFAULT_QUEUE_MIN_STOP_S: f64 = 10.0;
pub const DEFAULT_BRAKING_G: f64 = 0.47;
pub const DEFAULT_BRAKING_SUSTAIN_S: f64 = 2.0;
/// A fragment endpoint farther than this from the mask edge counts as a
/// start or end inside the mask.
pub const BOUNDARY_TOLERANCE_M: f64 = 0.01;

const SPAN_EPS: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalyticsError {
    #[error("mask {0:?} has no approach zones")]
    NoApproaches(String),
    #[error("journey {0:?} has fewer than two samples")]
    TooShort(String),
    #[error("journey {id:?} starts {distance:.2} m inside the mask")]
    StartsInside { id: String, distance: f64 },
    #[error("journey {id:?} ends {distance:.2} m inside the mask")]
    EndsInside { id: String, distance: f64 },
    #[error("journey {0:?} has non-increasing timestamps")]
    Unsorted(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StopEvent {
    pub journey_id: String,
    pub t_start: f64,
    pub duration: f64,
    pub location: PlanarPoint,
    pub approach: Option<Direction>,
}

/// Maximal runs of samples slower than `speed_threshold`. A run lasts from
/// its first slow sample until the next sample that moves again (or the
/// final sample when the journey ends stopped); runs shorter than
/// `min_duration` are ignored. Missing speeds count as stopped.
pub fn detect_stops(journey: &Journey, speed_threshold: f64, min_duration: f64) -> Vec<StopEvent> {
    let s = &journey.samples;
    let mut out = Vec::new();
    let mut i = 0;
    while i < s.len() {
        if s[i].speed_or_zero() >= speed_threshold {
            i += 1;
            continue;
        }
        let start = i;
        while i < s.len() && s[i].speed_or_zero() < speed_threshold {
            i += 1;
        }
        let end_t = if i < s.len() { s[i].t } else { s[i - 1].t };
        let duration = end_t - s[start].t;
        if duration >= min_duration - SPAN_EPS && duration > 0.0 {
            out.push(StopEvent {
                journey_id: journey.id.clone(),
                t_start: s[start].t,
                duration,
                location: s[start].pos,
                approach: None,
            });
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MovementRecord {
    pub journey_id: String,
    pub origin: Direction,
    pub dest: Direction,
    pub travel_time: f64,
}

/// Distance from `p` to the nearest edge of any of the mask's rings.
pub fn distance_to_boundary(mask: &Mask, p: &PlanarPoint) -> f64 {
    let mut best = f64::INFINITY;
    for poly in &mask.polygons {
        for ring in poly.rings() {
            let n = ring.len();
            for i in 0..n {
                best = best.min(point_segment_distance(p, &ring[i], &ring[(i + 1) % n]));
            }
        }
    }
    best
}

fn nearest_zone(mask: &Mask, p: &PlanarPoint) -> Direction {
    mask.approaches
        .iter()
        .min_by(|a, b| a.entry_point.distance(p).total_cmp(&b.entry_point.distance(p)))
        .map(|a| a.direction)
        .expect("caller checked approaches")
}

/// Labels a fragment by where it entered and left the mask.
///
/// The origin is the inbound direction of the zone nearest the first sample.
/// The destination is the direction of travel when leaving, i.e. the
/// opposite of the label of the zone nearest the last sample. A west-to-east
/// pass is therefore EB to EB.
pub fn classify_movement(fragment: &Journey, mask: &Mask) -> Result<MovementRecord, AnalyticsError> {
    if mask.approaches.is_empty() {
        return Err(AnalyticsError::NoApproaches(mask.id.clone()));
    }
    let (first, last) = match (fragment.samples.first(), fragment.samples.last()) {
        (Some(a), Some(b)) if fragment.samples.len() >= 2 => (a, b),
        _ => return Err(AnalyticsError::TooShort(fragment.id.clone())),
    };
    if !(last.t > first.t) {
        return Err(AnalyticsError::Unsorted(fragment.id.clone()));
    }
    let d0 = distance_to_boundary(mask, &first.pos);
    if d0 > BOUNDARY_TOLERANCE_M {
        return Err(AnalyticsError::StartsInside { id: fragment.id.clone(), distance: d0 });
    }
    let d1 = distance_to_boundary(mask, &last.pos);
    if d1 > BOUNDARY_TOLERANCE_M {
        return Err(AnalyticsError::EndsInside { id: fragment.id.clone(), distance: d1 });
    }
    Ok(MovementRecord {
        journey_id: fragment.id.clone(),
        origin: nearest_zone(mask, &first.pos),
        dest: nearest_zone(mask, &last.pos).opposite(),
        travel_time: last.t - first.t,
    })
}

/// Counts per (origin, dest), indexed by [`Direction::index`].
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OdMatrix(pub [[u64; 4]; 4]);

impl OdMatrix {
    pub fn get(&self, origin: Direction, dest: Direction) -> u64 {
        self.0[origin.index()][dest.index()]
    }

    pub fn total(&self) -> u64 {
        self.0.iter().flatten().sum()
    }

    pub fn row_total(&self, origin: Direction) -> u64 {
        self.0[origin.index()].iter().sum()
    }

    /// Turning proportions per origin; rows with no records are all zero.
    pub fn turning_ratios(&self) -> [[f64; 4]; 4] {
        let mut out = [[0.0; 4]; 4];
        for o in Direction::ALL {
            let n = self.row_total(o);
            if n > 0 {
                for d in Direction::ALL {
                    out[o.index()][d.index()] = self.get(o, d) as f64 / n as f64;
                }
            }
        }
        out
    }
}

pub fn od_matrix(records: &[MovementRecord]) -> OdMatrix {
    let mut m = OdMatrix::default();
    for r in records {
        m.0[r.origin.index()][r.dest.index()] += 1;
    }
    m
}

/// Per-cell travel time; `None` where no records exist.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TravelTimeMatrix(pub [[Option<f64>; 4]; 4]);

impl TravelTimeMatrix {
    pub fn get(&self, origin: Direction, dest: Direction) -> Option<f64> {
        self.0[origin.index()][dest.index()]
    }
}

fn cell_values(records: &[MovementRecord]) -> Vec<Vec<Vec<f64>>> {
    let mut cells = vec![vec![Vec::new(); 4]; 4];
    for r in records {
        cells[r.origin.index()][r.dest.index()].push(r.travel_time);
    }
    cells
}

fn reduce_cells(records: &[MovementRecord], f: impl Fn(&mut Vec<f64>) -> f64) -> TravelTimeMatrix {
    let mut out = TravelTimeMatrix::default();
    for (i, row) in cell_values(records).iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            if !v.is_empty() {
                out.0[i][j] = Some(f(v));
            }
        }
    }
    out
}

/// Arithmetic mean travel time per (origin, dest).
pub fn travel_time_matrix(records: &[MovementRecord]) -> TravelTimeMatrix {
    reduce_cells(records, |v| v.iter().sum::<f64>() / v.len() as f64)
}

/// Median travel time per (origin, dest).
pub fn travel_time_median_matrix(records: &[MovementRecord]) -> TravelTimeMatrix {
    reduce_cells(records, |v| {
        v.sort_by(f64::total_cmp);
        let n = v.len();
        if n % 2 == 1 {
            v[n / 2]
        } else {
            0.5 * (v[n / 2 - 1] + v[n / 2])
        }
    })
}

/// Sample mean and standard deviation (n − 1 denominator, 0 for one value).
pub fn mean_and_sample_std(values: &[f64]) -> Option<(f64, f64)> {
    let n = values.len();
    if n == 0 {
        return None;
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return Some((mean, 0.0));
    }
    let ss: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
    Some((mean, (ss / (n - 1) as f64).sqrt()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueueDistribution {
    pub approach: Direction,
    pub mu: f64,
    pub sigma: f64,
    pub n: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct QueueFit {
    pub distributions: Vec<QueueDistribution>,
    /// Qualifying stops with no approach, or an approach the mask lacks.
    pub excluded: usize,
}

/// Normal fit of distance-to-stop-bar for stops longer than `min_stop`,
/// per approach, in direction order.
pub fn queue_distributions(stops: &[StopEvent], mask: &Mask, min_stop: f64) -> QueueFit {
    let mut per: [Vec<f64>; 4] = Default::default();
    let mut excluded = 0;
    for s in stops.iter().filter(|s| s.duration > min_stop) {
        match s.approach.and_then(|d| mask.approach(d)) {
            Some(zone) => per[zone.direction.index()].push(s.location.distance(&zone.stop_bar)),
            None => excluded += 1,
        }
    }
    let distributions = Direction::ALL
        .iter()
        .filter_map(|&d| {
            let v = &per[d.index()];
            mean_and_sample_std(v).map(|(mu, sigma)| QueueDistribution { approach: d, mu, sigma, n: v.len() })
        })
        .collect();
    QueueFit { distributions, excluded }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BrakingEvent {
    pub journey_id: String,
    pub t_start: f64,
    pub duration: f64,
    pub peak_decel: f64,
    pub location: PlanarPoint,
}

/// Windows of consecutive segments that all decelerate at least
/// `threshold_g` g and together span at least `sustain` seconds.
pub fn detect_braking(journey: &Journey, threshold_g: f64, sustain: f64) -> Vec<BrakingEvent> {
    let s = &journey.samples;
    if s.len() < 2 || journey.duration() < sustain - SPAN_EPS {
        return Vec::new();
    }
    let limit = -threshold_g * STANDARD_GRAVITY;
    let accel: Vec<f64> = s
        .windows(2)
        .map(|w| {
            let dt = w[1].t - w[0].t;
            if dt > 0.0 {
                (w[1].speed_or_zero() - w[0].speed_or_zero()) / dt
            } else {
                0.0
            }
        })
        .collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < accel.len() {
        if accel[i] > limit {
            i += 1;
            continue;
        }
        let start = i;
        while i < accel.len() && accel[i] <= limit {
            i += 1;
        }
        let span = s[i].t - s[start].t;
        if span >= sustain - SPAN_EPS {
            out.push(BrakingEvent {
                journey_id: journey.id.clone(),
                t_start: s[start].t,
                duration: span,
                peak_decel: accel[start..i].iter().copied().fold(f64::INFINITY, f64::min),
                location: s[start].pos,
            });
        }
    }
    out
}

/// Stops for many journeys in parallel, ordered by journey key.
pub fn detect_stops_all(journeys: &[Journey], speed_threshold: f64, min_duration: f64) -> Vec<StopEvent> {
    let mut idx: Vec<usize> = (0..journeys.len()).collect();
    idx.sort_by(|&a, &b| journeys[a].key().cmp(&journeys[b].key()));
    idx.par_iter().flat_map_iter(|&i| detect_stops(&journeys[i], speed_threshold, min_duration)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::{buffer_circle, GeoPoint, Polyline, Projection};
    use crate::masks::{build_intersection_masks, derive_approaches};
    use crate::trajectory::Sample;

    fn speeds(v: &[f64], dt: f64) -> Journey {
        Journey::new("j", v.iter().enumerate().map(|(i, &s)| Sample::new(i as f64 * dt, i as f64, 0.0, s)).collect())
    }

    pub(crate) fn cross_mask() -> Mask {
        let proj = Projection::new(GeoPoint::new(-81.0, 29.0).unwrap()).unwrap();
        let m = build_intersection_masks(&proj, &[("X".into(), proj.origin())], 125.0).unwrap().remove(0);
        let lines = [
            Polyline::new(vec![PlanarPoint::new(-400.0, 0.0), PlanarPoint::new(400.0, 0.0)]).unwrap(),
            Polyline::new(vec![PlanarPoint::new(0.0, -400.0), PlanarPoint::new(0.0, 400.0)]).unwrap(),
        ];
        derive_approaches(&m, &lines).unwrap()
    }

    fn path(pts: &[(f64, f64, f64)]) -> Journey {
        Journey::new("p", pts.iter().map(|&(t, x, y)| Sample::new(t, x, y, 10.0)).collect())
    }

    /// Point on the disc boundary between vertices `k` and `k + 1` (vertex 0
    /// due east, counter-clockwise).
    fn on_ring(k: usize, u: f64) -> (f64, f64) {
        let poly = buffer_circle(PlanarPoint::new(0.0, 0.0), 125.0).unwrap();
        let ring = poly.exterior();
        let p = ring[k % 64].lerp(&ring[(k + 1) % 64], u);
        (p.x, p.y)
    }

    #[test]
    fn stop_run_arithmetic() {
        let st = detect_stops(&speeds(&[10.0, 0.5, 0.5, 10.0], 3.0), 1.0, 3.0);
        assert_eq!(st.len(), 1);
        assert_eq!(st[0].duration, 6.0);
        assert_eq!(st[0].t_start, 3.0);
        let st = detect_stops(&speeds(&[0.0; 61], 1.0), 1.0, 3.0);
        assert_eq!(st.len(), 1);
        assert_eq!(st[0].duration, 60.0);
        assert!(detect_stops(&speeds(&[1.0, 5.0, 1.0], 3.0), 1.0, 3.0).is_empty());
    }

    #[test]
    fn through_pass_is_eb_eb() {
        let m = cross_mask();
        let (wx, wy) = on_ring(32, 0.0);
        let (ex, ey) = on_ring(0, 0.0);
        let r = classify_movement(&path(&[(100.0, wx, wy), (120.0, 0.0, 0.0), (145.0, ex, ey)]), &m).unwrap();
        assert_eq!((r.origin, r.dest), (Direction::EB, Direction::EB));
        assert_eq!(r.travel_time, 45.0);
    }

    #[test]
    fn left_turn_from_south() {
        let m = cross_mask();
        let (sx, sy) = on_ring(48, 0.0);
        let (wx, wy) = on_ring(31, 0.5);
        let r = classify_movement(&path(&[(0.0, sx, sy), (10.0, 0.0, 0.0), (20.0, wx, wy)]), &m).unwrap();
        assert_eq!((r.origin, r.dest), (Direction::NB, Direction::WB));
    }

    #[test]
    fn u_turn_leaves_opposite_to_arrival() {
        let m = cross_mask();
        let (ax, ay) = on_ring(16, 0.2);
        let (bx, by) = on_ring(15, 0.8);
        let r = classify_movement(&path(&[(0.0, ax, ay), (10.0, 0.0, 0.0), (20.0, bx, by)]), &m).unwrap();
        assert_eq!(r.origin, Direction::SB);
        assert_eq!(r.dest, Direction::NB);
        assert_eq!(r.dest, r.origin.opposite());
    }

    #[test]
    fn mid_mask_start_is_unclassifiable() {
        let m = cross_mask();
        let (ex, ey) = on_ring(0, 0.0);
        let e = classify_movement(&path(&[(0.0, 0.0, 0.0), (10.0, ex, ey)]), &m).unwrap_err();
        assert!(matches!(e, AnalyticsError::StartsInside { .. }));
    }

    fn rec(o: Direction, d: Direction, tt: f64) -> MovementRecord {
        MovementRecord { journey_id: "x".into(), origin: o, dest: d, travel_time: tt }
    }

    #[test]
    fn matrices() {
        use Direction::*;
        let m = od_matrix(&[rec(NB, EB, 10.0)]);
        assert_eq!(m.get(NB, EB), 1);
        assert_eq!(m.total(), 1);
        assert_eq!(od_matrix(&[]).total(), 0);
        let recs = [rec(NB, SB, 40.0), rec(NB, SB, 50.0), rec(EB, EB, 33.0)];
        let tt = travel_time_matrix(&recs);
        assert_eq!(tt.get(NB, SB), Some(45.0));
        assert_eq!(tt.get(EB, EB), Some(33.0));
        assert_eq!(tt.get(SB, NB), None);
        let med = travel_time_median_matrix(&[rec(NB, SB, 40.0), rec(NB, SB, 50.0), rec(NB, SB, 100.0)]);
        assert_eq!(med.get(NB, SB), Some(50.0));
    }

    fn stop_at(d: Direction, dist: f64, dur: f64, m: &Mask) -> StopEvent {
        let zone = m.approach(d).unwrap();
        let c = PlanarPoint::new(0.0, 0.0);
        let u = PlanarPoint::new((zone.stop_bar.x - c.x) / 25.0, (zone.stop_bar.y - c.y) / 25.0);
        StopEvent {
            journey_id: "s".into(),
            t_start: 0.0,
            duration: dur,
            location: PlanarPoint::new(zone.stop_bar.x + u.x * dist, zone.stop_bar.y + u.y * dist),
            approach: Some(d),
        }
    }

    #[test]
    fn queue_fit() {
        let m = cross_mask();
        let stops: Vec<_> = [20.0, 30.0, 40.0].iter().map(|&d| stop_at(Direction::EB, d, 20.0, &m)).collect();
        let q = queue_distributions(&stops, &m, 10.0);
        assert_eq!(q.distributions.len(), 1);
        assert!((q.distributions[0].mu - 30.0).abs() < 1e-9);
        assert!((q.distributions[0].sigma - 10.0).abs() < 1e-9);

        let q = queue_distributions(&[stop_at(Direction::NB, 25.0, 12.0, &m)], &m, 10.0);
        assert_eq!((q.distributions[0].n, q.distributions[0].sigma), (1, 0.0));
        assert!((q.distributions[0].mu - 25.0).abs() < 1e-9);

        assert!(queue_distributions(&[stop_at(Direction::NB, 25.0, 8.0, &m)], &m, 10.0).distributions.is_empty());

        let mut lost = stop_at(Direction::NB, 25.0, 12.0, &m);
        lost.approach = None;
        assert_eq!(queue_distributions(&[lost], &m, 10.0).excluded, 1);
    }

    #[test]
    fn braking_rules() {
        let j = Journey::new("b", vec![Sample::new(0.0, 0.0, 0.0, 20.0), Sample::new(2.0, 30.0, 0.0, 10.0)]);
        let ev = detect_braking(&j, 0.47, 2.0);
        assert_eq!(ev.len(), 1);
        assert_eq!(ev[0].peak_decel, -5.0);

        let j = Journey::new("b", vec![Sample::new(0.0, 0.0, 0.0, 20.0), Sample::new(3.0, 57.0, 0.0, 18.0)]);
        assert!(detect_braking(&j, 0.47, 2.0).is_empty());

        let j = Journey::new(
            "b",
            vec![Sample::new(0.0, 0.0, 0.0, 20.0), Sample::new(1.5, 25.0, 0.0, 12.5), Sample::new(3.0, 40.0, 0.0, 5.0)],
        );
        let ev = detect_braking(&j, 0.47, 2.0);
        assert_eq!(ev.len(), 1);
        assert_eq!(ev[0].duration, 3.0);

        // a single 1.5 s segment is too short
        let j = Journey::new("b", vec![Sample::new(0.0, 0.0, 0.0, 20.0), Sample::new(1.5, 25.0, 0.0, 12.5), Sample::new(4.5, 60.0, 0.0, 12.0)]);
        assert!(detect_braking(&j, 0.47, 2.0).is_empty());
    }
}
