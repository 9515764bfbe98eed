use rstar::primitives::{GeomWithData, Rectangle};
use rstar::{RTree, AABB};
use serde::{Deserialize, Serialize};

use super::PoiRef;
use crate::geo::{closest_point_on_segment, haversine, point_in_ring, LatLon, METERS_PER_DEGREE};
use crate::{Error, Result};

pub const DEFAULT_MATCH_RADIUS_M: f64 = 65.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Geometry {
    Point(LatLon),
    /// Closed ring: first vertex repeated at the end.
    Polygon(Vec<LatLon>),
}

impl Geometry {
    /// Parses `POINT(lon lat)` or `POLYGON((lon lat, lon lat, ...))`.
    pub fn parse_wkt(s: &str) -> Result<Self> {
        let s = s.trim();
        let upper = s.to_ascii_uppercase();
        let geom = if let Some(rest) = upper.strip_prefix("POINT") {
            let body = strip_parens(rest.trim(), 1).ok_or_else(|| bad_wkt(s))?;
            let coords = parse_coords(body, s)?;
            match coords.as_slice() {
                [p] => Geometry::Point(*p),
                _ => return Err(bad_wkt(s)),
            }
        } else if let Some(rest) = upper.strip_prefix("POLYGON") {
            let body = strip_parens(rest.trim(), 2).ok_or_else(|| bad_wkt(s))?;
            if body.contains('(') {
                return Err(Error::invalid(format!("polygon holes are not supported: {s}")));
            }
            Geometry::Polygon(parse_coords(body, s)?)
        } else {
            return Err(bad_wkt(s));
        };
        geom.validate()?;
        Ok(geom)
    }

    pub fn to_wkt(&self) -> String {
        let fmt = |p: &LatLon| format!("{} {}", p.lon, p.lat);
        match self {
            Geometry::Point(p) => format!("POINT({})", fmt(p)),
            Geometry::Polygon(ring) => {
                let parts: Vec<String> = ring.iter().map(fmt).collect();
                format!("POLYGON(({}))", parts.join(", "))
            }
        }
    }

    /// Coordinates in range; rings closed, with at least three distinct
    /// vertices and no self-intersections.
    pub fn validate(&self) -> Result<()> {
        match self {
            Geometry::Point(p) => {
                if !p.is_valid() {
                    return Err(Error::invalid(format!("point {p:?} out of range")));
                }
            }
            Geometry::Polygon(ring) => {
                if ring.iter().any(|p| !p.is_valid()) {
                    return Err(Error::invalid("polygon vertex out of range"));
                }
                if ring.len() < 4 {
                    return Err(Error::invalid("polygon ring needs at least three distinct vertices"));
                }
                if ring.first() != ring.last() {
                    return Err(Error::invalid("polygon ring is not closed"));
                }
                if ring_self_intersects(ring) {
                    return Err(Error::invalid("polygon ring self-intersects"));
                }
            }
        }
        Ok(())
    }

    pub fn is_point(&self) -> bool {
        matches!(self, Geometry::Point(_))
    }

    /// Meters from `p`: Haversine to a point; zero inside a polygon, otherwise
    /// Haversine to the nearest point of the ring.
    pub fn distance_to(&self, p: LatLon) -> f64 {
        match self {
            Geometry::Point(q) => haversine(p, *q),
            Geometry::Polygon(ring) => {
                if point_in_ring(p, ring) {
                    return 0.0;
                }
                ring.windows(2)
                    .map(|w| haversine(p, closest_point_on_segment(p, w[0], w[1])))
                    .fold(f64::INFINITY, f64::min)
            }
        }
    }

    fn bounds(&self) -> ([f64; 2], [f64; 2]) {
        match self {
            Geometry::Point(p) => ([p.lon, p.lat], [p.lon, p.lat]),
            Geometry::Polygon(ring) => {
                let mut lo = [f64::INFINITY; 2];
                let mut hi = [f64::NEG_INFINITY; 2];
                for p in ring {
                    lo = [lo[0].min(p.lon), lo[1].min(p.lat)];
                    hi = [hi[0].max(p.lon), hi[1].max(p.lat)];
                }
                (lo, hi)
            }
        }
    }
}

fn bad_wkt(s: &str) -> Error {
    Error::invalid(format!("unrecognised geometry {s:?}"))
}

fn strip_parens(s: &str, depth: usize) -> Option<&str> {
    let mut s = s;
    for _ in 0..depth {
        s = s.trim().strip_prefix('(')?.strip_suffix(')')?;
    }
    Some(s.trim())
}

fn parse_coords(body: &str, original: &str) -> Result<Vec<LatLon>> {
    body.split(',')
        .map(|pair| {
            let mut it = pair.split_whitespace().map(str::parse::<f64>);
            match (it.next(), it.next(), it.next()) {
                (Some(Ok(lon)), Some(Ok(lat)), None) => Ok(LatLon::new(lat, lon)),
                _ => Err(bad_wkt(original)),
            }
        })
        .collect()
}

fn ring_self_intersects(ring: &[LatLon]) -> bool {
    let segs: Vec<(LatLon, LatLon)> = ring.windows(2).map(|w| (w[0], w[1])).collect();
    let n = segs.len();
    for i in 0..n {
        for j in i + 1..n {
            let adjacent = j == i + 1 || (i == 0 && j == n - 1);
            if adjacent {
                continue;
            }
            if segments_intersect(segs[i], segs[j]) {
                return true;
            }
        }
    }
    false
}

fn segments_intersect((a, b): (LatLon, LatLon), (c, d): (LatLon, LatLon)) -> bool {
    let orient = |p: LatLon, q: LatLon, r: LatLon| {
        let v = (q.lon - p.lon) * (r.lat - p.lat) - (q.lat - p.lat) * (r.lon - p.lon);
        v.partial_cmp(&0.0).map_or(0, |o| o as i8)
    };
    let on_segment = |p: LatLon, q: LatLon, r: LatLon| {
        q.lon <= p.lon.max(r.lon) && q.lon >= p.lon.min(r.lon) && q.lat <= p.lat.max(r.lat) && q.lat >= p.lat.min(r.lat)
    };
    let (o1, o2, o3, o4) = (orient(a, b, c), orient(a, b, d), orient(c, d, a), orient(c, d, b));
    if o1 != o2 && o3 != o4 && o1 != 0 && o2 != 0 && o3 != 0 && o4 != 0 {
        return true;
    }
    (o1 == 0 && on_segment(a, c, b))
        || (o2 == 0 && on_segment(a, d, b))
        || (o3 == 0 && on_segment(c, a, d))
        || (o4 == 0 && on_segment(c, b, d))
}

/// A venue with a two-level category.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Poi {
    pub poi_id: String,
    pub geometry: Geometry,
    pub category_l1: String,
    pub category_l2: String,
}

impl Poi {
    pub fn to_ref(&self) -> PoiRef {
        PoiRef {
            poi_id: self.poi_id.clone(),
            l1: self.category_l1.clone(),
            l2: self.category_l2.clone(),
        }
    }
}

type Entry = GeomWithData<Rectangle<[f64; 2]>, usize>;

/// Immutable R-tree over POI bounding boxes in lon/lat degrees.
pub struct PoiIndex {
    pois: Vec<Poi>,
    tree: RTree<Entry>,
}

impl PoiIndex {
    pub fn new(pois: Vec<Poi>) -> Self {
        let entries = pois
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let (lo, hi) = p.geometry.bounds();
                GeomWithData::new(Rectangle::from_corners(lo, hi), i)
            })
            .collect();
        PoiIndex {
            pois,
            tree: RTree::bulk_load(entries),
        }
    }

    pub fn pois(&self) -> &[Poi] {
        &self.pois
    }

    pub fn len(&self) -> usize {
        self.pois.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pois.is_empty()
    }

    /// Indices of POIs whose bounding box may lie within `radius` of `p`.
    fn candidates(&self, p: LatLon, radius: f64) -> impl Iterator<Item = usize> + '_ {
        // 1% slack over the spherical-to-degree conversion.
        let dlat = radius / METERS_PER_DEGREE * 1.01;
        let cos = p.lat.to_radians().cos().max(1e-6);
        let dlon = (dlat / cos).min(360.0);
        let env = AABB::from_corners([p.lon - dlon, p.lat - dlat], [p.lon + dlon, p.lat + dlat]);
        self.tree.locate_in_envelope_intersecting(&env).map(|e| e.data)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoiMatch<'a> {
    pub poi: &'a Poi,
    pub distance: f64,
}

/// Nearest POI within `radius` meters of `p`. Any point POI in range beats
/// every polygon POI in range, so a venue inside a larger complex is preferred
/// over the complex; within a class the nearest wins, then the earlier index.
pub fn match_poi<'a>(index: &'a PoiIndex, p: LatLon, radius: f64) -> Option<PoiMatch<'a>> {
    let mut best: Option<(bool, f64, usize)> = None;
    for i in index.candidates(p, radius) {
        let poi = &index.pois[i];
        let d = poi.geometry.distance_to(p);
        if !(d <= radius) {
            continue;
        }
        // Rank: points first, then distance, then index.
        let key = (!poi.geometry.is_point(), d, i);
        let better = match best {
            None => true,
            Some(b) => (key.0, key.1, key.2) < (b.0, b.1, b.2),
        };
        if better {
            best = Some(key);
        }
    }
    best.map(|(_, distance, i)| PoiMatch {
        poi: &index.pois[i],
        distance,
    })
}
