//! Corridor and intersection masks built from road centerlines and
//! intersection centres.
//!
//! Intersection masks are discs (64-gons) around each centre. Corridor masks
//! are the union of fixed-width centerline buffers with every intersection
//! disc cut out, so the two kinds never overlap. Each intersection mask also
//! carries its approach zones: one per road arm, labelled by the compass
//! direction inbound traffic is travelling.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::geo::geojson::{self, GeoJsonError, RawFeatures};
use crate::geo::{
    buffer_circle, buffer_polyline, clip_difference, union_all, GeoError, GeoPoint, PlanarPoint, Polygon,
    Polyline, Projection,
};

pub const DEFAULT_RADIUS_M: f64 = 125.0;
pub const DEFAULT_HALF_WIDTH_M: f64 = 35.0;
/// Half of the assumed 50 m intersection box; stop bars sit on its edge.
pub const INNER_BOX_HALF_WIDTH_M: f64 = 25.0;
/// Clipped corridor pieces smaller than this are discarded.
pub const SLIVER_AREA_M2: f64 = 10.0;

#[derive(Debug, Error)]
pub enum MaskError {
    #[error(transparent)]
    Geometry(#[from] GeoError),
    #[error(transparent)]
    GeoJson(#[from] GeoJsonError),
    #[error("duplicate mask id {0:?}")]
    DuplicateId(String),
    #[error("mask {0:?} is not an intersection mask")]
    NotIntersection(String),
    #[error("mask {id:?}: {crossings} centerline crossing(s), need at least 2 for an intersection")]
    TooFewCrossings { id: String, crossings: usize },
    #[error("mask {id:?}: {count} distinct approach arms, at most 4 are supported")]
    TooManyApproaches { id: String, count: usize },
}

/// Compass direction of travel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Direction {
    NB,
    SB,
    EB,
    WB,
}

impl Direction {
    pub const ALL: [Direction; 4] = [Direction::NB, Direction::SB, Direction::EB, Direction::WB];

    pub fn index(self) -> usize {
        self as usize
    }

    /// Nominal compass bearing of travel.
    pub fn bearing(self) -> f64 {
        match self {
            Direction::NB => 0.0,
            Direction::EB => 90.0,
            Direction::SB => 180.0,
            Direction::WB => 270.0,
        }
    }

    pub fn from_bearing(bearing: f64) -> Direction {
        match (((bearing.rem_euclid(360.0) + 45.0) / 90.0).floor() as i64).rem_euclid(4) {
            0 => Direction::NB,
            1 => Direction::EB,
            2 => Direction::SB,
            _ => Direction::WB,
        }
    }

    pub fn opposite(self) -> Direction {
        match self {
            Direction::NB => Direction::SB,
            Direction::SB => Direction::NB,
            Direction::EB => Direction::WB,
            Direction::WB => Direction::EB,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Direction::NB => "NB",
            Direction::SB => "SB",
            Direction::EB => "EB",
            Direction::WB => "WB",
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Direction {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().as_str() {
            "NB" => Ok(Direction::NB),
            "SB" => Ok(Direction::SB),
            "EB" => Ok(Direction::EB),
            "WB" => Ok(Direction::WB),
            other => Err(format!("unknown direction {other:?}")),
        }
    }
}

/// Smallest absolute difference between two bearings, in degrees.
pub fn bearing_diff(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(360.0);
    d.min(360.0 - d)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MaskKind {
    Corridor,
    Intersection,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ApproachZone {
    /// Direction of travel of vehicles entering on this arm.
    pub direction: Direction,
    /// Bearing of inbound travel at the mask edge, degrees.
    pub entry_bearing: f64,
    /// Reference point at the edge of the inner intersection box.
    pub stop_bar: PlanarPoint,
    /// Where the arm's centerline crosses the mask boundary.
    pub entry_point: PlanarPoint,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mask {
    pub id: String,
    pub kind: MaskKind,
    pub polygons: Vec<Polygon>,
    pub intersection_id: Option<String>,
    pub center: Option<PlanarPoint>,
    pub radius: Option<f64>,
    pub approaches: Vec<ApproachZone>,
}

impl Mask {
    pub fn contains(&self, p: &PlanarPoint) -> bool {
        self.polygons.iter().any(|poly| poly.contains(p))
    }

    pub fn area(&self) -> f64 {
        self.polygons.iter().map(Polygon::area).sum()
    }

    pub fn approach(&self, d: Direction) -> Option<&ApproachZone> {
        self.approaches.iter().find(|a| a.direction == d)
    }
}

/// One circular mask per centre.
pub fn build_intersection_masks(
    proj: &Projection,
    centers: &[(String, GeoPoint)],
    radius: f64,
) -> Result<Vec<Mask>, MaskError> {
    let mut seen = BTreeSet::new();
    centers
        .iter()
        .map(|(id, g)| {
            if !seen.insert(id.as_str()) {
                return Err(MaskError::DuplicateId(id.clone()));
            }
            let c = proj.project(*g)?;
            Ok(Mask {
                id: id.clone(),
                kind: MaskKind::Intersection,
                polygons: vec![buffer_circle(c, radius)?],
                intersection_id: Some(id.clone()),
                center: Some(c),
                radius: Some(radius),
                approaches: vec![],
            })
        })
        .collect()
}

/// Merged centerline buffers minus every intersection disc.
pub fn build_corridor_masks(
    centerlines: &[Polyline],
    intersection_masks: &[Mask],
    half_width: f64,
) -> Result<Vec<Mask>, MaskError> {
    let buffers = centerlines
        .iter()
        .map(|l| buffer_polyline(l, half_width))
        .collect::<Result<Vec<_>, _>>()?;
    if buffers.is_empty() {
        return Ok(vec![]);
    }
    let merged = union_all(&buffers)?;
    let discs: Vec<Polygon> = intersection_masks.iter().flat_map(|m| m.polygons.iter().cloned()).collect();
    let mut pieces = Vec::new();
    for part in &merged {
        pieces.extend(clip_difference(part, &discs)?);
    }
    pieces.retain(|p| p.area() >= SLIVER_AREA_M2);
    pieces.sort_by(|a, b| {
        let (ba, bb) = (a.bbox(), b.bbox());
        ba.min.x.total_cmp(&bb.min.x).then(ba.min.y.total_cmp(&bb.min.y))
    });
    Ok(pieces
        .into_iter()
        .enumerate()
        .map(|(i, p)| Mask {
            id: format!("corridor-{}", i + 1),
            kind: MaskKind::Corridor,
            polygons: vec![p],
            intersection_id: None,
            center: None,
            radius: None,
            approaches: vec![],
        })
        .collect())
}

/// Point where the ray from `center` at `bearing` leaves the axis-aligned box
/// of the given half width.
fn inner_box_point(center: PlanarPoint, bearing: f64, half: f64) -> PlanarPoint {
    let (s, c) = bearing.to_radians().sin_cos();
    let scale = half / s.abs().max(c.abs());
    PlanarPoint::new(center.x + scale * s, center.y + scale * c)
}

fn circular_mean(bearings: &[f64]) -> f64 {
    let (s, c) = bearings.iter().fold((0.0, 0.0), |(s, c), b| {
        let (bs, bc) = b.to_radians().sin_cos();
        (s + bs, c + bc)
    });
    s.atan2(c).to_degrees().rem_euclid(360.0)
}

/// Assigns distinct cardinals to arms, minimising total angular deviation.
/// Ties resolve to the first permutation in canonical order.
fn assign_cardinals(bearings: &[f64]) -> Vec<Direction> {
    fn search(i: usize, bearings: &[f64], used: &mut [bool; 4], cur: &mut Vec<Direction>, best: &mut (f64, Vec<Direction>)) {
        if i == bearings.len() {
            let cost: f64 = cur.iter().zip(bearings).map(|(d, b)| bearing_diff(d.bearing(), *b)).sum();
            if cost < best.0 - 1e-9 {
                *best = (cost, cur.clone());
            }
            return;
        }
        for d in Direction::ALL {
            if !used[d.index()] {
                used[d.index()] = true;
                cur.push(d);
                search(i + 1, bearings, used, cur, best);
                cur.pop();
                used[d.index()] = false;
            }
        }
    }
    let mut best = (f64::INFINITY, Vec::new());
    search(0, bearings, &mut [false; 4], &mut Vec::new(), &mut best);
    best.1
}

/// Fills in approach zones for an intersection mask from the centerlines that
/// cross its boundary.
pub fn derive_approaches(mask: &Mask, centerlines: &[Polyline]) -> Result<Mask, MaskError> {
    let center = match (mask.kind, mask.center) {
        (MaskKind::Intersection, Some(c)) => c,
        _ => return Err(MaskError::NotIntersection(mask.id.clone())),
    };
    let ring = mask.polygons[0].exterior();
    let n = ring.len();
    let mut crossings: Vec<PlanarPoint> = Vec::new();
    for line in centerlines {
        for (a, b) in line.segments() {
            for i in 0..n {
                if let Some(p) = segment_intersection(a, b, ring[i], ring[(i + 1) % n]) {
                    if crossings.iter().all(|q| q.distance(&p) > 1e-6) {
                        crossings.push(p);
                    }
                }
            }
        }
    }
    if crossings.len() < 2 {
        return Err(MaskError::TooFewCrossings { id: mask.id.clone(), crossings: crossings.len() });
    }

    // Group crossings into arms: position bearings closer than 45 degrees
    // belong to the same arm.
    let mut arms: Vec<Vec<PlanarPoint>> = Vec::new();
    let mut by_bearing: Vec<(f64, PlanarPoint)> = crossings.iter().map(|p| (center.bearing_to(p), *p)).collect();
    by_bearing.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut arm_bearings: Vec<Vec<f64>> = Vec::new();
    for (b, p) in by_bearing {
        match arm_bearings.last() {
            Some(prev) if bearing_diff(*prev.last().unwrap(), b) < 45.0 => {
                arm_bearings.last_mut().unwrap().push(b);
                arms.last_mut().unwrap().push(p);
            }
            _ => {
                arm_bearings.push(vec![b]);
                arms.push(vec![p]);
            }
        }
    }
    // close the circle
    if arms.len() > 1 {
        let first = arm_bearings[0][0];
        let last = *arm_bearings.last().unwrap().last().unwrap();
        if bearing_diff(first, last) < 45.0 {
            let tail_b = arm_bearings.pop().unwrap();
            let tail_p = arms.pop().unwrap();
            arm_bearings[0].extend(tail_b);
            arms[0].extend(tail_p);
        }
    }
    if arms.len() > 4 {
        return Err(MaskError::TooManyApproaches { id: mask.id.clone(), count: arms.len() });
    }

    let position_bearings: Vec<f64> = arm_bearings.iter().map(|b| circular_mean(b)).collect();
    let inbound: Vec<f64> = position_bearings.iter().map(|b| (b + 180.0).rem_euclid(360.0)).collect();
    let dirs = assign_cardinals(&inbound);
    let mut approaches: Vec<ApproachZone> = dirs
        .into_iter()
        .zip(position_bearings.iter().zip(&inbound))
        .zip(&arms)
        .map(|((direction, (pos_b, in_b)), pts)| {
            let k = pts.len() as f64;
            let entry_point = PlanarPoint::new(
                pts.iter().map(|p| p.x).sum::<f64>() / k,
                pts.iter().map(|p| p.y).sum::<f64>() / k,
            );
            ApproachZone {
                direction,
                entry_bearing: *in_b,
                stop_bar: inner_box_point(center, *pos_b, INNER_BOX_HALF_WIDTH_M),
                entry_point,
            }
        })
        .collect();
    approaches.sort_by_key(|a| a.direction);
    Ok(Mask { approaches, ..mask.clone() })
}

fn segment_intersection(p0: PlanarPoint, p1: PlanarPoint, q0: PlanarPoint, q1: PlanarPoint) -> Option<PlanarPoint> {
    let r = (p1.x - p0.x, p1.y - p0.y);
    let s = (q1.x - q0.x, q1.y - q0.y);
    let denom = r.0 * s.1 - r.1 * s.0;
    if denom == 0.0 {
        return None;
    }
    let qp = (q0.x - p0.x, q0.y - p0.y);
    let t = (qp.0 * s.1 - qp.1 * s.0) / denom;
    let u = (qp.0 * r.1 - qp.1 * r.0) / denom;
    if (0.0..=1.0).contains(&t) && (0.0..=1.0).contains(&u) {
        Some(p0.lerp(&p1, t))
    } else {
        None
    }
}

/// All masks of a region plus the projection they are expressed in.
#[derive(Debug, Clone)]
pub struct MaskSet {
    projection: Projection,
    masks: Vec<Mask>,
}

impl MaskSet {
    pub fn new(projection: Projection, masks: Vec<Mask>) -> Result<Self, MaskError> {
        let mut seen = BTreeSet::new();
        for m in &masks {
            if !seen.insert(m.id.as_str()) {
                return Err(MaskError::DuplicateId(m.id.clone()));
            }
        }
        Ok(Self { projection, masks })
    }

    /// The full mask-building pipeline: project around the data centroid,
    /// build intersection discs and corridor strips, derive approaches.
    pub fn build(features: &RawFeatures, half_width: f64, radius: f64) -> Result<Self, MaskError> {
        let coords: Vec<GeoPoint> = features.all_coordinates().collect();
        let projection = Projection::centered_on(&coords)?;
        let lines = features
            .lines
            .iter()
            .map(|l| geojson::project_line(l, &projection))
            .collect::<Result<Vec<_>, _>>()?;
        let mut intersections = build_intersection_masks(&projection, &features.points, radius)?;
        let corridors = build_corridor_masks(&lines, &intersections, half_width)?;
        for m in &mut intersections {
            match derive_approaches(m, &lines) {
                Ok(with) => *m = with,
                Err(e) => log::warn!("{e}; mask kept without approaches"),
            }
        }
        intersections.extend(corridors);
        Self::new(projection, intersections)
    }

    pub fn projection(&self) -> &Projection {
        &self.projection
    }

    pub fn masks(&self) -> &[Mask] {
        &self.masks
    }

    pub fn get(&self, id: &str) -> Option<&Mask> {
        self.masks.iter().find(|m| m.id == id)
    }

    pub fn intersection(&self, intersection_id: &str) -> Option<&Mask> {
        self.masks
            .iter()
            .find(|m| m.kind == MaskKind::Intersection && m.intersection_id.as_deref() == Some(intersection_id))
    }

    pub fn count(&self, kind: MaskKind) -> usize {
        self.masks.iter().filter(|m| m.kind == kind).count()
    }

    pub fn to_geojson(&self) -> Value {
        let proj = &self.projection;
        let ll = |p: &PlanarPoint| {
            let g = proj.unproject(*p);
            json!([g.lon, g.lat])
        };
        let features: Vec<Value> = self
            .masks
            .iter()
            .map(|m| {
                let approaches: Vec<Value> = m
                    .approaches
                    .iter()
                    .map(|a| {
                        json!({
                            "direction": a.direction,
                            "entry_bearing": a.entry_bearing,
                            "stop_bar": ll(&a.stop_bar),
                            "entry_point": ll(&a.entry_point),
                        })
                    })
                    .collect();
                json!({
                    "type": "Feature",
                    "geometry": geojson::polygons_to_geometry(&m.polygons, proj),
                    "properties": {
                        "id": m.id,
                        "kind": m.kind,
                        "intersection_id": m.intersection_id,
                        "center": m.center.as_ref().map(ll),
                        "radius": m.radius,
                        "approaches": approaches,
                    }
                })
            })
            .collect();
        json!({
            "type": "FeatureCollection",
            geojson::ORIGIN_MEMBER: geojson::origin_member(proj),
            "features": features,
        })
    }

    pub fn from_geojson(text: &str) -> Result<Self, MaskError> {
        let root: Value = serde_json::from_str(text).map_err(GeoJsonError::from)?;
        let proj = geojson::read_origin_member(&root)?;
        let bad = |m: &str| MaskError::GeoJson(GeoJsonError::Format(m.to_string()));
        let point = |v: &Value| -> Result<PlanarPoint, MaskError> {
            let a = v.as_array().ok_or_else(|| bad("point is not an array"))?;
            let lon = a.first().and_then(Value::as_f64).ok_or_else(|| bad("bad lon"))?;
            let lat = a.get(1).and_then(Value::as_f64).ok_or_else(|| bad("bad lat"))?;
            Ok(proj.project(GeoPoint::new(lon, lat)?)?)
        };
        let features = root.get("features").and_then(Value::as_array).ok_or_else(|| bad("no features"))?;
        let mut masks = Vec::with_capacity(features.len());
        for f in features {
            let props = f.get("properties").ok_or_else(|| bad("feature without properties"))?;
            let id = props.get("id").and_then(Value::as_str).ok_or_else(|| bad("mask without id"))?;
            let kind: MaskKind = serde_json::from_value(props.get("kind").cloned().unwrap_or(Value::Null))
                .map_err(|_| bad("mask kind must be corridor or intersection"))?;
            let geom = f.get("geometry").ok_or_else(|| bad("feature without geometry"))?;
            let center = match props.get("center") {
                Some(v) if !v.is_null() => Some(point(v)?),
                _ => None,
            };
            let mut approaches = Vec::new();
            if let Some(arr) = props.get("approaches").and_then(Value::as_array) {
                for a in arr {
                    let direction: Direction = a
                        .get("direction")
                        .and_then(Value::as_str)
                        .ok_or_else(|| bad("approach without direction"))?
                        .parse()
                        .map_err(|e: String| bad(&e))?;
                    let stop_bar = point(a.get("stop_bar").ok_or_else(|| bad("approach without stop_bar"))?)?;
                    let entry_point = match a.get("entry_point") {
                        Some(v) => point(v)?,
                        None => stop_bar,
                    };
                    approaches.push(ApproachZone {
                        direction,
                        entry_bearing: a.get("entry_bearing").and_then(Value::as_f64).unwrap_or(direction.bearing()),
                        stop_bar,
                        entry_point,
                    });
                }
            }
            masks.push(Mask {
                id: id.to_string(),
                kind,
                polygons: geojson::geometry_to_polygons(geom, &proj)?,
                intersection_id: props.get("intersection_id").and_then(Value::as_str).map(str::to_string),
                center,
                radius: props.get("radius").and_then(Value::as_f64),
                approaches,
            });
        }
        Self::new(proj, masks)
    }
}
