use geo::{Area, BooleanOps};

use super::{point_segment_distance, GeoError, PlanarPoint, Polygon, BOUNDARY_EPS};
use crate::trajectory::{Journey, Sample};

pub(crate) fn union_geo(polys: &[geo::Polygon<f64>]) -> geo::MultiPolygon<f64> {
    geo::unary_union(polys.iter())
}

/// Union of arbitrary polygons. Returns the disjoint parts.
pub fn union_all(polys: &[Polygon]) -> Result<Vec<Polygon>, GeoError> {
    let geo_polys: Vec<_> = polys.iter().map(Polygon::to_geo).collect();
    union_geo(&geo_polys)
        .0
        .iter()
        .filter(|p| p.unsigned_area() > 0.0)
        .map(Polygon::from_geo)
        .collect()
}

/// `subject` minus the union of `clips`.
pub fn clip_difference(subject: &Polygon, clips: &[Polygon]) -> Result<Vec<Polygon>, GeoError> {
    let relevant: Vec<geo::Polygon<f64>> = clips
        .iter()
        .filter(|c| c.bbox().intersects(&subject.bbox()))
        .map(Polygon::to_geo)
        .collect();
    if relevant.is_empty() {
        return Ok(vec![subject.clone()]);
    }
    let cutter = union_geo(&relevant);
    let rest = subject.to_geo().difference(&cutter);
    let clips: Vec<&Polygon> = clips.iter().filter(|c| c.bbox().intersects(&subject.bbox())).collect();
    rest.0
        .iter()
        .filter(|p| p.unsigned_area() > 0.0)
        .map(|p| {
            let poly = Polygon::from_geo(p)?;
            let rings: Vec<Vec<PlanarPoint>> = poly.rings().map(|r| snap_out(r, &clips)).collect();
            let mut rings = rings.into_iter();
            Polygon::from_trusted(rings.next().unwrap_or_default(), rings.collect())
        })
        .collect()
}

/// The overlay engine rounds to an integer grid, which can leave vertices of
/// a difference a fraction of a micrometre inside a clip. Those vertices are
/// moved onto the nearest clip edge.
fn snap_out(ring: &[PlanarPoint], clips: &[&Polygon]) -> Vec<PlanarPoint> {
    const SNAP: f64 = 1e-4;
    ring.iter()
        .map(|v| {
            let mut v = *v;
            for c in clips {
                if !c.bbox().contains(&v, SNAP) || !crossings_inside(&v, c) {
                    continue;
                }
                let mut best = (f64::INFINITY, v);
                for r in c.rings() {
                    let n = r.len();
                    for i in 0..n {
                        let q = closest_on_segment(&v, &r[i], &r[(i + 1) % n]);
                        let d = q.distance(&v);
                        if d < best.0 {
                            best = (d, q);
                        }
                    }
                }
                if best.0 <= SNAP {
                    v = best.1;
                }
            }
            v
        })
        .collect()
}

fn crossings_inside(p: &PlanarPoint, poly: &Polygon) -> bool {
    poly.rings().filter(|r| crossings_odd(p, r)).count() % 2 == 1
}

fn closest_on_segment(p: &PlanarPoint, a: &PlanarPoint, b: &PlanarPoint) -> PlanarPoint {
    let dx = b.x - a.x;
    let dy = b.y - a.y;
    let len2 = dx * dx + dy * dy;
    if len2 == 0.0 {
        return *a;
    }
    let u = (((p.x - a.x) * dx + (p.y - a.y) * dy) / len2).clamp(0.0, 1.0);
    a.lerp(b, u)
}

/// Area of `a ∩ b`.
///
/// When either operand is a convex polygon without holes the intersection is
/// computed by half-plane clipping in plain floating point, which avoids the
/// snapping error of the general overlay.
pub fn overlap_area(a: &Polygon, b: &Polygon) -> f64 {
    if !a.bbox().intersects(&b.bbox()) {
        return 0.0;
    }
    if is_convex(b) {
        return clip_by_convex_area(a, b.exterior());
    }
    if is_convex(a) {
        return clip_by_convex_area(b, a.exterior());
    }
    a.to_geo().intersection(&b.to_geo()).unsigned_area()
}

fn is_convex(p: &Polygon) -> bool {
    let r = p.exterior();
    let n = r.len();
    p.holes().is_empty()
        && (0..n).all(|i| {
            let (a, b, c) = (r[i], r[(i + 1) % n], r[(i + 2) % n]);
            (b.x - a.x) * (c.y - b.y) - (b.y - a.y) * (c.x - b.x) >= 0.0
        })
}

/// Sutherland-Hodgman against each edge of a counter-clockwise convex ring.
/// Works ring by ring, so holes of `subject` subtract as usual.
fn clip_by_convex_area(subject: &Polygon, convex: &[PlanarPoint]) -> f64 {
    let n = convex.len();
    subject
        .rings()
        .map(|ring| {
            let mut pts = ring.to_vec();
            for i in 0..n {
                if pts.is_empty() {
                    break;
                }
                let (a, b) = (convex[i], convex[(i + 1) % n]);
                let side = |p: &PlanarPoint| (b.x - a.x) * (p.y - a.y) - (b.y - a.y) * (p.x - a.x);
                let mut out = Vec::with_capacity(pts.len() + 2);
                for j in 0..pts.len() {
                    let cur = pts[j];
                    let prev = pts[(j + pts.len() - 1) % pts.len()];
                    let (sc, sp) = (side(&cur), side(&prev));
                    if sc >= 0.0 {
                        if sp < 0.0 {
                            out.push(prev.lerp(&cur, sp / (sp - sc)));
                        }
                        out.push(cur);
                    } else if sp >= 0.0 {
                        out.push(prev.lerp(&cur, sp / (sp - sc)));
                    }
                }
                pts = out;
            }
            if pts.len() < 3 {
                0.0
            } else {
                super::signed_area(&pts)
            }
        })
        .sum::<f64>()
        .max(0.0)
}

fn on_ring_boundary(p: &PlanarPoint, ring: &[PlanarPoint]) -> bool {
    let n = ring.len();
    (0..n).any(|i| point_segment_distance(p, &ring[i], &ring[(i + 1) % n]) <= BOUNDARY_EPS)
}

fn crossings_odd(p: &PlanarPoint, ring: &[PlanarPoint]) -> bool {
    let n = ring.len();
    let mut inside = false;
    let mut j = n - 1;
    for i in 0..n {
        let (a, b) = (ring[i], ring[j]);
        if (a.y > p.y) != (b.y > p.y) {
            let x = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
            if p.x < x {
                inside = !inside;
            }
        }
        j = i;
    }
    inside
}

/// Even-odd containment over the exterior minus holes. Points on any ring
/// boundary count as inside.
pub fn point_in_polygon(p: &PlanarPoint, poly: &Polygon) -> bool {
    if !poly.bbox().contains(p, BOUNDARY_EPS) {
        return false;
    }
    if poly.rings().any(|r| on_ring_boundary(p, r)) {
        return true;
    }
    poly.rings().filter(|r| crossings_odd(p, r)).count() % 2 == 1
}

/// Parameters along `p0`-`p1` where it meets the polygon boundary.
fn boundary_crossings(p0: PlanarPoint, p1: PlanarPoint, poly: &Polygon) -> Vec<f64> {
    let rx = p1.x - p0.x;
    let ry = p1.y - p0.y;
    let mut out = Vec::new();
    for ring in poly.rings() {
        let n = ring.len();
        for i in 0..n {
            let a = ring[i];
            let b = ring[(i + 1) % n];
            let sx = b.x - a.x;
            let sy = b.y - a.y;
            let denom = rx * sy - ry * sx;
            if denom == 0.0 {
                continue;
            }
            let qx = a.x - p0.x;
            let qy = a.y - p0.y;
            let u = (qx * sy - qy * sx) / denom;
            let v = (qx * ry - qy * rx) / denom;
            if (0.0..=1.0).contains(&u) && (-1e-12..=1.0 + 1e-12).contains(&v) {
                out.push(u);
            }
        }
    }
    out
}

fn interpolate(a: &Sample, b: &Sample, u: f64) -> Sample {
    let speed = match (a.speed, b.speed) {
        (Some(va), Some(vb)) => Some(va + (vb - va) * u),
        _ => None,
    };
    Sample {
        t: a.t + (b.t - a.t) * u,
        pos: a.pos.lerp(&b.pos, u),
        speed,
        ignition: a.ignition,
    }
}

/// Splits a journey into the maximal contiguous pieces lying inside `poly`.
///
/// Boundary crossings between samples get a synthetic sample with linearly
/// interpolated time, position and speed. Fragments keep the parent id and are
/// numbered from 1 in time order.
pub fn clip_journey(journey: &Journey, poly: &Polygon) -> Vec<Journey> {
    let samples = &journey.samples;
    if samples.is_empty() {
        return vec![];
    }
    if samples.len() == 1 {
        return if poly.contains(&samples[0].pos) {
            vec![journey.clone()]
        } else {
            vec![]
        };
    }

    // Refine the sample sequence with boundary crossings; each refined
    // sub-segment is then wholly inside or wholly outside.
    let mut refined: Vec<Sample> = Vec::with_capacity(samples.len() + 4);
    refined.push(samples[0].clone());
    for w in samples.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        let mut us = boundary_crossings(a.pos, b.pos, poly);
        us.retain(|u| *u > 1e-12 && *u < 1.0 - 1e-12);
        us.sort_by(f64::total_cmp);
        us.dedup_by(|x, y| (*x - *y).abs() <= 1e-12);
        for u in us {
            refined.push(interpolate(a, b, u));
        }
        refined.push(b.clone());
    }

    let mut fragments: Vec<Vec<Sample>> = Vec::new();
    let mut current: Vec<Sample> = Vec::new();
    for w in refined.windows(2) {
        let mid = w[0].pos.lerp(&w[1].pos, 0.5);
        if poly.contains(&mid) {
            if current.is_empty() {
                current.push(w[0].clone());
            }
            current.push(w[1].clone());
        } else if !current.is_empty() {
            fragments.push(std::mem::take(&mut current));
        }
    }
    if !current.is_empty() {
        fragments.push(current);
    }

    fragments
        .into_iter()
        .enumerate()
        .map(|(i, samples)| Journey {
            id: journey.id.clone(),
            part: i as u32 + 1,
            mask_id: journey.mask_id.clone(),
            samples,
        })
        .collect()
}
