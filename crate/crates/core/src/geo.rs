//! Great-circle geometry on raw WGS-84 coordinates.

use serde::{Deserialize, Serialize};

/// Mean Earth radius in meters.
pub const EARTH_RADIUS_M: f64 = 6_371_000.0;

/// Meters spanned by one degree of latitude.
pub const METERS_PER_DEGREE: f64 = EARTH_RADIUS_M * std::f64::consts::PI / 180.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatLon {
    pub lat: f64,
    pub lon: f64,
}

impl LatLon {
    pub const fn new(lat: f64, lon: f64) -> Self {
        LatLon { lat, lon }
    }

    pub fn is_valid(&self) -> bool {
        self.lat.is_finite()
            && self.lon.is_finite()
            && (-90.0..=90.0).contains(&self.lat)
            && (-180.0..=180.0).contains(&self.lon)
    }
}

/// Haversine great-circle distance in meters.
pub fn haversine(a: LatLon, b: LatLon) -> f64 {
    let phi1 = a.lat.to_radians();
    let phi2 = b.lat.to_radians();
    let dphi = (b.lat - a.lat).to_radians();
    let dlambda = (b.lon - a.lon).to_radians();
    let s_phi = (dphi / 2.0).sin();
    let s_lambda = (dlambda / 2.0).sin();
    let h = s_phi * s_phi + phi1.cos() * phi2.cos() * s_lambda * s_lambda;
    2.0 * EARTH_RADIUS_M * h.sqrt().min(1.0).asin()
}

/// Equirectangular projection centred on `origin`, in meters. Only meant for
/// sub-kilometre neighbourhoods.
#[derive(Debug, Clone, Copy)]
pub struct LocalFrame {
    origin: LatLon,
    cos_lat: f64,
}

impl LocalFrame {
    pub fn new(origin: LatLon) -> Self {
        LocalFrame {
            origin,
            cos_lat: origin.lat.to_radians().cos(),
        }
    }

    pub fn project(&self, p: LatLon) -> (f64, f64) {
        let x = (p.lon - self.origin.lon) * METERS_PER_DEGREE * self.cos_lat;
        let y = (p.lat - self.origin.lat) * METERS_PER_DEGREE;
        (x, y)
    }

    pub fn unproject(&self, (x, y): (f64, f64)) -> LatLon {
        let lat = self.origin.lat + y / METERS_PER_DEGREE;
        let lon = if self.cos_lat.abs() < 1e-12 {
            self.origin.lon
        } else {
            self.origin.lon + x / (METERS_PER_DEGREE * self.cos_lat)
        };
        LatLon { lat, lon }
    }
}

/// Point on segment `[a, b]` closest to `p`, found in a local planar frame
/// around `p`.
pub fn closest_point_on_segment(p: LatLon, a: LatLon, b: LatLon) -> LatLon {
    let frame = LocalFrame::new(p);
    let (ax, ay) = frame.project(a);
    let (bx, by) = frame.project(b);
    let (dx, dy) = (bx - ax, by - ay);
    let len2 = dx * dx + dy * dy;
    let t = if len2 == 0.0 {
        0.0
    } else {
        (-(ax * dx + ay * dy) / len2).clamp(0.0, 1.0)
    };
    frame.unproject((ax + t * dx, ay + t * dy))
}

/// Even-odd ray casting with lat/lon treated as planar coordinates.
pub fn point_in_ring(p: LatLon, ring: &[LatLon]) -> bool {
    let mut inside = false;
    let n = ring.len();
    if n < 3 {
        return false;
    }
    let mut j = n - 1;
    for i in 0..n {
        let (pi, pj) = (ring[i], ring[j]);
        if (pi.lat > p.lat) != (pj.lat > p.lat) {
            let x = pj.lon + (p.lat - pj.lat) * (pi.lon - pj.lon) / (pi.lat - pj.lat);
            if p.lon < x {
                inside = !inside;
            }
        }
        j = i;
    }
    inside
}

/// Arithmetic mean of coordinates, weighted.
pub fn weighted_mean(points: impl IntoIterator<Item = (LatLon, f64)>) -> Option<LatLon> {
    let (mut lat, mut lon, mut w) = (0.0, 0.0, 0.0);
    for (p, wt) in points {
        lat += p.lat * wt;
        lon += p.lon * wt;
        w += wt;
    }
    (w > 0.0).then(|| LatLon::new(lat / w, lon / w))
}
