use geo::ConvexHull;

use super::{clip::union_geo, GeoError, PlanarPoint, Polygon, Polyline};

/// Segment count used for circles and round caps.
pub const CIRCLE_SEGMENTS: usize = 64;

/// Regular polygon inscribed in the circle of `radius`, first vertex due east.
pub fn regular_polygon(center: PlanarPoint, radius: f64, segments: usize) -> Vec<PlanarPoint> {
    (0..segments)
        .map(|k| {
            let a = std::f64::consts::TAU * k as f64 / segments as f64;
            PlanarPoint::new(center.x + radius * a.cos(), center.y + radius * a.sin())
        })
        .collect()
}

pub fn buffer_circle(center: PlanarPoint, radius: f64) -> Result<Polygon, GeoError> {
    if !(radius > 0.0) {
        return Err(GeoError::NonPositive { what: "radius", value: radius });
    }
    if !center.is_finite() {
        return Err(GeoError::NonFinite(center.x, center.y));
    }
    Polygon::new(regular_polygon(center, radius, CIRCLE_SEGMENTS), vec![])
}

/// Minkowski sum of the polyline with the inscribed 64-gon of `half_width`.
///
/// Each segment contributes the convex hull of the disc polygon placed at its
/// two endpoints; the capsules are then unioned.
pub fn buffer_polyline(line: &Polyline, half_width: f64) -> Result<Polygon, GeoError> {
    if !(half_width > 0.0) {
        return Err(GeoError::NonPositive { what: "half_width", value: half_width });
    }
    let capsules: Vec<geo::Polygon<f64>> = line
        .segments()
        .map(|(a, b)| {
            let pts: Vec<geo::Point<f64>> = regular_polygon(a, half_width, CIRCLE_SEGMENTS)
                .into_iter()
                .chain(regular_polygon(b, half_width, CIRCLE_SEGMENTS))
                .map(|p| geo::Point::new(p.x, p.y))
                .collect();
            geo::MultiPoint::new(pts).convex_hull()
        })
        .collect();
    let merged = if capsules.len() == 1 {
        geo::MultiPolygon::new(capsules)
    } else {
        union_geo(&capsules)
    };
    let mut parts = merged.0;
    if parts.len() != 1 {
        return Err(GeoError::Unexpected(format!(
            "buffer of a connected polyline produced {} parts",
            parts.len()
        )));
    }
    Polygon::from_geo(&parts.remove(0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn seg(x0: f64, y0: f64, x1: f64, y1: f64) -> Polyline {
        Polyline::new(vec![PlanarPoint::new(x0, y0), PlanarPoint::new(x1, y1)]).unwrap()
    }

    #[test]
    fn straight_segment_buffer_bounds() {
        let poly = buffer_polyline(&seg(0.0, 0.0, 100.0, 0.0), 35.0).unwrap();
        assert!(poly.contains(&PlanarPoint::new(50.0, 34.9)));
        assert!(!poly.contains(&PlanarPoint::new(50.0, 35.8)));
        // rounded cap
        assert!(poly.contains(&PlanarPoint::new(-34.9, 0.0)));
        assert!(!poly.contains(&PlanarPoint::new(-35.1, 0.0)));
    }

    #[test]
    fn vertices_are_interior() {
        let line = Polyline::new(vec![
            PlanarPoint::new(0.0, 0.0),
            PlanarPoint::new(80.0, 10.0),
            PlanarPoint::new(120.0, 90.0),
            PlanarPoint::new(60.0, 140.0),
        ])
        .unwrap();
        let poly = buffer_polyline(&line, 35.0).unwrap();
        for v in line.vertices() {
            assert!(poly.contains(v));
            let edge_dist = poly
                .exterior()
                .iter()
                .zip(poly.exterior().iter().cycle().skip(1))
                .map(|(a, b)| super::super::point_segment_distance(v, a, b))
                .fold(f64::INFINITY, f64::min);
            assert!(edge_dist > 30.0);
        }
    }

    #[test]
    fn circle_contains_apothem_band() {
        let c = buffer_circle(PlanarPoint::new(0.0, 0.0), 125.0).unwrap();
        assert!(c.contains(&PlanarPoint::new(0.0, 124.5)));
        assert!(!c.contains(&PlanarPoint::new(0.0, 125.1)));
    }

    #[test]
    fn circle_area_is_inscribed_64gon() {
        let c = buffer_circle(PlanarPoint::new(0.0, 0.0), 125.0).unwrap();
        let n = CIRCLE_SEGMENTS as f64;
        let expected = 0.5 * n * 125.0f64.powi(2) * (std::f64::consts::TAU / n).sin();
        assert_abs_diff_eq!(c.area(), expected, epsilon = 1e-6);
        assert_abs_diff_eq!(c.area(), 49_008.57, epsilon = 0.01);
        let disc = std::f64::consts::PI * 125.0f64.powi(2);
        assert!((disc - c.area()) / disc < 0.002);
    }

    #[test]
    fn unit_circle_centroid_is_center() {
        let center = PlanarPoint::new(-1234.5, 987.25);
        let c = buffer_circle(center, 1.0).unwrap();
        let g = c.centroid();
        assert_abs_diff_eq!(g.x, center.x, epsilon = 1e-9);
        assert_abs_diff_eq!(g.y, center.y, epsilon = 1e-9);
    }

    #[test]
    fn non_positive_widths_rejected() {
        assert!(buffer_circle(PlanarPoint::default(), 0.0).is_err());
        assert!(buffer_polyline(&seg(0.0, 0.0, 1.0, 0.0), -1.0).is_err());
    }
}
