//! Buffers, point-in-polygon and polygon differences in a local planar frame.

use trafficlens::geo::{buffer_circle, buffer_polyline, clip_difference, GeoPoint, PlanarPoint, Polyline, Projection};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let proj = Projection::new(GeoPoint::new(-81.38, 28.54)?)?;
    let east = proj.project(GeoPoint::new(-81.37, 28.54)?)?;
    println!("0.01 deg of longitude here is {:.1} m", east.x);

    let road = Polyline::new(vec![PlanarPoint::new(-300.0, 0.0), PlanarPoint::new(300.0, 0.0)])?;
    let strip = buffer_polyline(&road, 35.0)?;
    let disc = buffer_circle(PlanarPoint::new(0.0, 0.0), 125.0)?;
    println!("strip area {:.0} m2, disc area {:.0} m2", strip.area(), disc.area());

    let pieces = clip_difference(&strip, &[disc])?;
    let remaining: f64 = pieces.iter().map(|p| p.area()).sum();
    println!("strip minus disc: {} pieces, {remaining:.0} m2", pieces.len());

    for p in [PlanarPoint::new(200.0, 10.0), PlanarPoint::new(50.0, 10.0), PlanarPoint::new(200.0, 40.0)] {
        let inside = pieces.iter().any(|poly| poly.contains(&p));
        println!("({:>5.1}, {:>4.1}) in corridor remainder: {inside}", p.x, p.y);
    }
    Ok(())
}
