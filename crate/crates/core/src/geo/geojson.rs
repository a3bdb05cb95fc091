//! Minimal GeoJSON reading and writing for the geometry types used here.
//! Coordinates on disk are WGS84 `[lon, lat]`; in memory they are planar.

use serde_json::{json, Value};
use thiserror::Error;

use super::{GeoError, GeoPoint, PlanarPoint, Polygon, Polyline, Projection};

/// Foreign member carrying the tangent-plane origin.
pub const ORIGIN_MEMBER: &str = "projection_origin";

#[derive(Debug, Error)]
pub enum GeoJsonError {
    #[error("invalid JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("malformed GeoJSON: {0}")]
    Format(String),
    #[error(transparent)]
    Geometry(#[from] GeoError),
}

fn fmt_err(msg: impl Into<String>) -> GeoJsonError {
    GeoJsonError::Format(msg.into())
}

/// Line and point features of a FeatureCollection, still in WGS84.
#[derive(Debug, Default, Clone)]
pub struct RawFeatures {
    pub lines: Vec<Vec<GeoPoint>>,
    /// Points keyed by their `id` property.
    pub points: Vec<(String, GeoPoint)>,
}

impl RawFeatures {
    pub fn all_coordinates(&self) -> impl Iterator<Item = GeoPoint> + '_ {
        self.lines.iter().flatten().copied().chain(self.points.iter().map(|(_, p)| *p))
    }
}

fn position(v: &Value) -> Result<GeoPoint, GeoJsonError> {
    let arr = v.as_array().ok_or_else(|| fmt_err("position is not an array"))?;
    if arr.len() < 2 {
        return Err(fmt_err("position needs at least two numbers"));
    }
    let lon = arr[0].as_f64().ok_or_else(|| fmt_err("longitude is not a number"))?;
    let lat = arr[1].as_f64().ok_or_else(|| fmt_err("latitude is not a number"))?;
    // Any third (Z) or fourth (M) ordinate is ignored.
    Ok(GeoPoint::new(lon, lat)?)
}

fn positions(v: &Value) -> Result<Vec<GeoPoint>, GeoJsonError> {
    v.as_array()
        .ok_or_else(|| fmt_err("coordinate list is not an array"))?
        .iter()
        .map(position)
        .collect()
}

fn feature_id(feature: &Value) -> Option<String> {
    let from = |v: &Value| match v {
        Value::String(s) => Some(s.clone()),
        Value::Number(n) => Some(n.to_string()),
        _ => None,
    };
    feature
        .get("properties")
        .and_then(|p| p.get("id"))
        .and_then(from)
        .or_else(|| feature.get("id").and_then(from))
}

/// Reads LineString / MultiLineString and Point features from a
/// FeatureCollection. Other geometry types are skipped.
pub fn read_features(text: &str) -> Result<RawFeatures, GeoJsonError> {
    let root: Value = serde_json::from_str(text)?;
    let features = root
        .get("features")
        .and_then(Value::as_array)
        .ok_or_else(|| fmt_err("expected a FeatureCollection with a features array"))?;
    let mut out = RawFeatures::default();
    for (i, f) in features.iter().enumerate() {
        let geom = f.get("geometry").ok_or_else(|| fmt_err(format!("feature {i} has no geometry")))?;
        let kind = geom.get("type").and_then(Value::as_str).unwrap_or_default();
        let coords = geom.get("coordinates");
        match (kind, coords) {
            ("LineString", Some(c)) => out.lines.push(positions(c)?),
            ("MultiLineString", Some(c)) => {
                for part in c.as_array().ok_or_else(|| fmt_err("bad MultiLineString"))? {
                    out.lines.push(positions(part)?);
                }
            }
            ("Point", Some(c)) => {
                let id = feature_id(f).ok_or_else(|| fmt_err(format!("point feature {i} has no id")))?;
                out.points.push((id, position(c)?));
            }
            _ => log::debug!("skipping feature {i} of type {kind:?}"),
        }
    }
    Ok(out)
}

pub fn project_line(line: &[GeoPoint], proj: &Projection) -> Result<Polyline, GeoError> {
    let pts = line.iter().map(|p| proj.project(*p)).collect::<Result<Vec<_>, _>>()?;
    Polyline::new(pts)
}

fn ring_coords(ring: &[PlanarPoint], proj: &Projection) -> Value {
    let mut coords: Vec<Value> = ring
        .iter()
        .map(|p| {
            let g = proj.unproject(*p);
            json!([g.lon, g.lat])
        })
        .collect();
    coords.push(coords[0].clone());
    Value::Array(coords)
}

fn polygon_coords(poly: &Polygon, proj: &Projection) -> Value {
    Value::Array(poly.rings().map(|r| ring_coords(r, proj)).collect())
}

/// Polygon geometry for one part, MultiPolygon for several.
pub fn polygons_to_geometry(polys: &[Polygon], proj: &Projection) -> Value {
    if polys.len() == 1 {
        json!({"type": "Polygon", "coordinates": polygon_coords(&polys[0], proj)})
    } else {
        let parts: Vec<Value> = polys.iter().map(|p| polygon_coords(p, proj)).collect();
        json!({"type": "MultiPolygon", "coordinates": parts})
    }
}

pub fn polyline_to_geometry(line: &Polyline, proj: &Projection) -> Value {
    let coords: Vec<Value> = line
        .vertices()
        .iter()
        .map(|p| {
            let g = proj.unproject(*p);
            json!([g.lon, g.lat])
        })
        .collect();
    json!({"type": "LineString", "coordinates": coords})
}

fn polygon_from_coords(v: &Value, proj: &Projection) -> Result<Polygon, GeoJsonError> {
    let rings = v.as_array().ok_or_else(|| fmt_err("polygon coordinates are not an array"))?;
    let mut planar = rings.iter().map(|r| {
        positions(r)?
            .into_iter()
            .map(|g| proj.project(g).map_err(GeoJsonError::from))
            .collect::<Result<Vec<_>, _>>()
    });
    let exterior = planar.next().ok_or_else(|| fmt_err("polygon without rings"))??;
    let holes = planar.collect::<Result<Vec<_>, _>>()?;
    Ok(Polygon::from_trusted(exterior, holes)?)
}

/// Reads a Polygon or MultiPolygon geometry into planar polygons.
pub fn geometry_to_polygons(geom: &Value, proj: &Projection) -> Result<Vec<Polygon>, GeoJsonError> {
    let kind = geom.get("type").and_then(Value::as_str).unwrap_or_default();
    let coords = geom.get("coordinates").ok_or_else(|| fmt_err("geometry without coordinates"))?;
    match kind {
        "Polygon" => Ok(vec![polygon_from_coords(coords, proj)?]),
        "MultiPolygon" => coords
            .as_array()
            .ok_or_else(|| fmt_err("bad MultiPolygon"))?
            .iter()
            .map(|c| polygon_from_coords(c, proj))
            .collect(),
        other => Err(fmt_err(format!("expected Polygon or MultiPolygon, got {other:?}"))),
    }
}

pub fn origin_member(proj: &Projection) -> Value {
    let o = proj.origin();
    json!([o.lon, o.lat])
}

pub fn read_origin_member(root: &Value) -> Result<Projection, GeoJsonError> {
    let o = root
        .get(ORIGIN_MEMBER)
        .ok_or_else(|| fmt_err(format!("missing top-level {ORIGIN_MEMBER:?}")))?;
    Ok(Projection::new(position(o)?)?)
}
