//! Planar geometry kernel.
//!
//! Everything downstream of ingestion works in a local tangent plane measured
//! in meters. [`Projection`] maps WGS84 coordinates into that plane with an
//! equirectangular approximation centred on a regional origin, which keeps
//! distortion well under 0.1% for county-sized extents.

mod buffer;
mod clip;
pub mod geojson;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use buffer::{buffer_circle, buffer_polyline, regular_polygon, CIRCLE_SEGMENTS};
pub use clip::{clip_difference, clip_journey, overlap_area, point_in_polygon, union_all};

/// Mean Earth radius used by the local projection.
pub const EARTH_RADIUS_M: f64 = 6_371_000.0;

/// Distance below which a point is considered to lie on a polygon edge.
pub const BOUNDARY_EPS: f64 = 1e-7;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeoError {
    #[error("non-finite coordinate ({0}, {1})")]
    NonFinite(f64, f64),
    #[error("coordinate out of range: lon {lon}, lat {lat}")]
    OutOfRange { lon: f64, lat: f64 },
    #[error("projection origin latitude {0} must be strictly inside (-90, 90)")]
    BadOrigin(f64),
    #[error("degenerate polyline: fewer than two distinct vertices")]
    DegeneratePolyline,
    #[error("invalid ring: {0}")]
    InvalidRing(String),
    #[error("{what} must be positive, got {value}")]
    NonPositive { what: &'static str, value: f64 },
    #[error("geometry operation produced an unexpected result: {0}")]
    Unexpected(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    pub lon: f64,
    pub lat: f64,
}

impl GeoPoint {
    pub fn new(lon: f64, lat: f64) -> Result<Self, GeoError> {
        if !lon.is_finite() || !lat.is_finite() {
            return Err(GeoError::NonFinite(lon, lat));
        }
        if !(-180.0..=180.0).contains(&lon) || !(-90.0..=90.0).contains(&lat) {
            return Err(GeoError::OutOfRange { lon, lat });
        }
        Ok(Self { lon, lat })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PlanarPoint {
    pub x: f64,
    pub y: f64,
}

impl PlanarPoint {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &PlanarPoint) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn lerp(&self, other: &PlanarPoint, u: f64) -> PlanarPoint {
        PlanarPoint::new(
            self.x + (other.x - self.x) * u,
            self.y + (other.y - self.y) * u,
        )
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    /// Compass bearing in degrees (0 = north, 90 = east) of the vector from
    /// `self` to `to`.
    pub fn bearing_to(&self, to: &PlanarPoint) -> f64 {
        let deg = (to.x - self.x).atan2(to.y - self.y).to_degrees();
        deg.rem_euclid(360.0)
    }
}

/// Equirectangular tangent-plane projection around a fixed origin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    origin: GeoPoint,
    cos_lat0: f64,
}

impl Projection {
    pub fn new(origin: GeoPoint) -> Result<Self, GeoError> {
        let origin = GeoPoint::new(origin.lon, origin.lat)?;
        if origin.lat <= -90.0 || origin.lat >= 90.0 {
            return Err(GeoError::BadOrigin(origin.lat));
        }
        Ok(Self {
            origin,
            cos_lat0: origin.lat.to_radians().cos(),
        })
    }

    /// Origin at the mean of the given coordinates.
    pub fn centered_on(points: &[GeoPoint]) -> Result<Self, GeoError> {
        if points.is_empty() {
            return Self::new(GeoPoint { lon: 0.0, lat: 0.0 });
        }
        let n = points.len() as f64;
        let lon = points.iter().map(|p| p.lon).sum::<f64>() / n;
        let lat = points.iter().map(|p| p.lat).sum::<f64>() / n;
        Self::new(GeoPoint { lon, lat })
    }

    pub fn origin(&self) -> GeoPoint {
        self.origin
    }

    pub fn project(&self, p: GeoPoint) -> Result<PlanarPoint, GeoError> {
        let p = GeoPoint::new(p.lon, p.lat)?;
        let k = EARTH_RADIUS_M * std::f64::consts::PI / 180.0;
        Ok(PlanarPoint {
            x: k * (p.lon - self.origin.lon) * self.cos_lat0,
            y: k * (p.lat - self.origin.lat),
        })
    }

    pub fn unproject(&self, p: PlanarPoint) -> GeoPoint {
        let k = EARTH_RADIUS_M * std::f64::consts::PI / 180.0;
        GeoPoint {
            lon: self.origin.lon + p.x / (k * self.cos_lat0),
            lat: self.origin.lat + p.y / k,
        }
    }
}

/// Projects a batch of points into the tangent plane at `origin`.
pub fn project_to_local(origin: GeoPoint, points: &[GeoPoint]) -> Result<Vec<PlanarPoint>, GeoError> {
    let proj = Projection::new(origin)?;
    points.iter().map(|p| proj.project(*p)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BBox {
    pub min: PlanarPoint,
    pub max: PlanarPoint,
}

impl BBox {
    pub fn of(points: impl IntoIterator<Item = PlanarPoint>) -> Option<BBox> {
        let mut it = points.into_iter();
        let first = it.next()?;
        let mut b = BBox { min: first, max: first };
        for p in it {
            b.min.x = b.min.x.min(p.x);
            b.min.y = b.min.y.min(p.y);
            b.max.x = b.max.x.max(p.x);
            b.max.y = b.max.y.max(p.y);
        }
        Some(b)
    }

    pub fn intersects(&self, other: &BBox) -> bool {
        self.min.x <= other.max.x
            && other.min.x <= self.max.x
            && self.min.y <= other.max.y
            && other.min.y <= self.max.y
    }

    pub fn contains(&self, p: &PlanarPoint, pad: f64) -> bool {
        p.x >= self.min.x - pad
            && p.x <= self.max.x + pad
            && p.y >= self.min.y - pad
            && p.y <= self.max.y + pad
    }
}

/// Open polyline of at least two distinct vertices.
#[derive(Debug, Clone, PartialEq)]
pub struct Polyline {
    vertices: Vec<PlanarPoint>,
}

impl Polyline {
    /// Builds a polyline, dropping consecutive vertices closer than 1e-9 m.
    pub fn new(vertices: Vec<PlanarPoint>) -> Result<Self, GeoError> {
        let mut out: Vec<PlanarPoint> = Vec::with_capacity(vertices.len());
        for v in vertices {
            if !v.is_finite() {
                return Err(GeoError::NonFinite(v.x, v.y));
            }
            if out.last().is_none_or(|last| last.distance(&v) > 1e-9) {
                out.push(v);
            }
        }
        if out.len() < 2 {
            return Err(GeoError::DegeneratePolyline);
        }
        Ok(Self { vertices: out })
    }

    pub fn vertices(&self) -> &[PlanarPoint] {
        &self.vertices
    }

    pub fn segments(&self) -> impl Iterator<Item = (PlanarPoint, PlanarPoint)> + '_ {
        self.vertices.windows(2).map(|w| (w[0], w[1]))
    }

    pub fn length(&self) -> f64 {
        self.segments().map(|(a, b)| a.distance(&b)).sum()
    }
}

/// Simple polygon with optional holes. Rings are stored open (the closing
/// vertex is implicit); the exterior is counter-clockwise and holes clockwise.
#[derive(Debug, Clone, PartialEq)]
pub struct Polygon {
    exterior: Vec<PlanarPoint>,
    holes: Vec<Vec<PlanarPoint>>,
    bbox: BBox,
}

impl Polygon {
    /// Validates and normalises ring orientation.
    pub fn new(exterior: Vec<PlanarPoint>, holes: Vec<Vec<PlanarPoint>>) -> Result<Self, GeoError> {
        let exterior = normalize_ring(exterior, true)?;
        check_simple(&exterior)?;
        let holes = holes
            .into_iter()
            .map(|h| {
                let h = normalize_ring(h, false)?;
                check_simple(&h)?;
                Ok(h)
            })
            .collect::<Result<Vec<_>, GeoError>>()?;
        let poly = Self::assemble(exterior, holes);
        if poly.area() <= 0.0 {
            return Err(GeoError::InvalidRing("polygon has no area".into()));
        }
        Ok(poly)
    }

    /// Axis-aligned rectangle, mostly handy in tests and fixtures.
    pub fn rect(x0: f64, y0: f64, x1: f64, y1: f64) -> Result<Self, GeoError> {
        Self::new(
            vec![
                PlanarPoint::new(x0, y0),
                PlanarPoint::new(x1, y0),
                PlanarPoint::new(x1, y1),
                PlanarPoint::new(x0, y1),
            ],
            vec![],
        )
    }

    /// Skips the self-intersection check. Used for output of the overlay
    /// engine, whose rings may legally touch at single vertices.
    pub(crate) fn from_trusted(exterior: Vec<PlanarPoint>, holes: Vec<Vec<PlanarPoint>>) -> Result<Self, GeoError> {
        let exterior = normalize_ring(exterior, true)?;
        let holes = holes
            .into_iter()
            .filter_map(|h| normalize_ring(h, false).ok())
            .collect();
        Ok(Self::assemble(exterior, holes))
    }

    fn assemble(exterior: Vec<PlanarPoint>, holes: Vec<Vec<PlanarPoint>>) -> Self {
        let bbox = BBox::of(exterior.iter().copied()).expect("ring has vertices");
        Self { exterior, holes, bbox }
    }

    pub fn exterior(&self) -> &[PlanarPoint] {
        &self.exterior
    }

    pub fn holes(&self) -> &[Vec<PlanarPoint>] {
        &self.holes
    }

    pub fn rings(&self) -> impl Iterator<Item = &[PlanarPoint]> {
        std::iter::once(self.exterior.as_slice()).chain(self.holes.iter().map(|h| h.as_slice()))
    }

    pub fn bbox(&self) -> BBox {
        self.bbox
    }

    pub fn area(&self) -> f64 {
        signed_area(&self.exterior) + self.holes.iter().map(|h| signed_area(h)).sum::<f64>()
    }

    /// Area-weighted centroid (holes subtract).
    pub fn centroid(&self) -> PlanarPoint {
        // shift to a local reference to keep the cross products small
        let r = self.exterior[0];
        let mut a = 0.0;
        let mut cx = 0.0;
        let mut cy = 0.0;
        for ring in self.rings() {
            let n = ring.len();
            for i in 0..n {
                let p = PlanarPoint::new(ring[i].x - r.x, ring[i].y - r.y);
                let q = PlanarPoint::new(ring[(i + 1) % n].x - r.x, ring[(i + 1) % n].y - r.y);
                let cross = p.x * q.y - q.x * p.y;
                a += cross;
                cx += (p.x + q.x) * cross;
                cy += (p.y + q.y) * cross;
            }
        }
        a *= 0.5;
        PlanarPoint::new(r.x + cx / (6.0 * a), r.y + cy / (6.0 * a))
    }

    pub fn contains(&self, p: &PlanarPoint) -> bool {
        point_in_polygon(p, self)
    }

    pub(crate) fn to_geo(&self) -> geo::Polygon<f64> {
        let ring = |r: &[PlanarPoint]| {
            let mut coords: Vec<geo::Coord<f64>> = r.iter().map(|p| geo::coord! { x: p.x, y: p.y }).collect();
            coords.push(coords[0]);
            geo::LineString::new(coords)
        };
        geo::Polygon::new(ring(&self.exterior), self.holes.iter().map(|h| ring(h)).collect())
    }

    pub(crate) fn from_geo(p: &geo::Polygon<f64>) -> Result<Self, GeoError> {
        let ring = |ls: &geo::LineString<f64>| ls.0.iter().map(|c| PlanarPoint::new(c.x, c.y)).collect::<Vec<_>>();
        Self::from_trusted(ring(p.exterior()), p.interiors().iter().map(ring).collect())
    }
}

pub(crate) fn signed_area(ring: &[PlanarPoint]) -> f64 {
    let n = ring.len();
    let mut s = 0.0;
    for i in 0..n {
        let p = ring[i];
        let q = ring[(i + 1) % n];
        s += p.x * q.y - q.x * p.y;
    }
    0.5 * s
}

fn normalize_ring(mut ring: Vec<PlanarPoint>, ccw: bool) -> Result<Vec<PlanarPoint>, GeoError> {
    if let Some(bad) = ring.iter().find(|p| !p.is_finite()) {
        return Err(GeoError::NonFinite(bad.x, bad.y));
    }
    ring.dedup_by(|b, a| a.distance(b) <= 1e-12);
    while ring.len() > 1 && ring[0].distance(&ring[ring.len() - 1]) <= 1e-12 {
        ring.pop();
    }
    if ring.len() < 3 {
        return Err(GeoError::InvalidRing(format!("ring has {} distinct vertices", ring.len())));
    }
    let a = signed_area(&ring);
    if a == 0.0 {
        return Err(GeoError::InvalidRing("ring has zero area".into()));
    }
    if (a > 0.0) != ccw {
        ring.reverse();
    }
    Ok(ring)
}

fn orient(a: PlanarPoint, b: PlanarPoint, c: PlanarPoint) -> f64 {
    (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x)
}

fn on_segment(a: PlanarPoint, b: PlanarPoint, p: PlanarPoint) -> bool {
    p.x >= a.x.min(b.x) && p.x <= a.x.max(b.x) && p.y >= a.y.min(b.y) && p.y <= a.y.max(b.y)
}

/// Closed-segment intersection test with exact orientation predicates.
pub(crate) fn segments_intersect(p1: PlanarPoint, p2: PlanarPoint, q1: PlanarPoint, q2: PlanarPoint) -> bool {
    let d1 = orient(q1, q2, p1);
    let d2 = orient(q1, q2, p2);
    let d3 = orient(p1, p2, q1);
    let d4 = orient(p1, p2, q2);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0)) && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0)) {
        return true;
    }
    (d1 == 0.0 && on_segment(q1, q2, p1))
        || (d2 == 0.0 && on_segment(q1, q2, p2))
        || (d3 == 0.0 && on_segment(p1, p2, q1))
        || (d4 == 0.0 && on_segment(p1, p2, q2))
}

fn check_simple(ring: &[PlanarPoint]) -> Result<(), GeoError> {
    let n = ring.len();
    for i in 0..n {
        let (a, b) = (ring[i], ring[(i + 1) % n]);
        for j in (i + 1)..n {
            // adjacent edges share a vertex by construction
            if j == i + 1 || (i == 0 && j == n - 1) {
                continue;
            }
            let (c, d) = (ring[j], ring[(j + 1) % n]);
            if segments_intersect(a, b, c, d) {
                return Err(GeoError::InvalidRing(format!("edges {i} and {j} intersect")));
            }
        }
    }
    Ok(())
}

/// Shortest distance from `p` to the segment `a`-`b`.
pub fn point_segment_distance(p: &PlanarPoint, a: &PlanarPoint, b: &PlanarPoint) -> f64 {
    let dx = b.x - a.x;
    let dy = b.y - a.y;
    let len2 = dx * dx + dy * dy;
    if len2 == 0.0 {
        return p.distance(a);
    }
    let u = (((p.x - a.x) * dx + (p.y - a.y) * dy) / len2).clamp(0.0, 1.0);
    p.distance(&a.lerp(b, u))
}
