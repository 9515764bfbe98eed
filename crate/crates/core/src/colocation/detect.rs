use std::collections::HashMap;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::clock::{self, Clock};
use crate::geo::{haversine, EARTH_RADIUS_M};
use crate::semantics::{SemanticLabel, Visit};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ColocationConfig {
    /// Maximum centroid distance in meters.
    pub radius_m: f64,
    /// Minimum temporal overlap in seconds.
    pub min_overlap_s: i64,
}

impl Default for ColocationConfig {
    fn default() -> Self {
        ColocationConfig {
            radius_m: 50.0,
            min_overlap_s: 15 * 60,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "kind", content = "poi_id")]
pub enum Place {
    Residential,
    Workplace,
    Poi(String),
    Other,
}

impl Place {
    pub fn kind(&self) -> &'static str {
        match self {
            Place::Residential => "Residential",
            Place::Workplace => "Workplace",
            Place::Poi(_) => "POI",
            Place::Other => "Other",
        }
    }
}

/// Two users stopping close to each other at the same time. `user_a < user_b`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ColocationEvent {
    pub day: NaiveDate,
    pub user_a: String,
    pub user_b: String,
    pub place: Place,
    pub overlap_start: i64,
    pub overlap_end: i64,
}

impl ColocationEvent {
    pub fn overlap_secs(&self) -> i64 {
        self.overlap_end - self.overlap_start
    }
}

/// Category of a co-location from the two visits' labels: Residential when
/// exactly one side is at home, Workplace when both are at work, POI when both
/// matched the same POI, Other otherwise.
pub fn classify(a: &Visit, b: &Visit) -> Place {
    let home_a = a.label == SemanticLabel::Residential;
    let home_b = b.label == SemanticLabel::Residential;
    if home_a != home_b {
        return Place::Residential;
    }
    if a.label == SemanticLabel::Workplace && b.label == SemanticLabel::Workplace {
        return Place::Workplace;
    }
    match (&a.poi, &b.poi) {
        (Some(p), Some(q)) if p.poi_id == q.poi_id => Place::Poi(p.poi_id.clone()),
        _ => Place::Other,
    }
}

fn event(a: &Visit, b: &Visit, cfg: &ColocationConfig, clock: &Clock) -> Option<ColocationEvent> {
    if a.user_id == b.user_id {
        return None;
    }
    let ov = clock::overlap((a.start_time, a.end_time), (b.start_time, b.end_time));
    if ov < cfg.min_overlap_s || ov == 0 {
        return None;
    }
    if haversine(a.position(), b.position()) > cfg.radius_m {
        return None;
    }
    let (a, b) = if a.user_id < b.user_id { (a, b) } else { (b, a) };
    let start = a.start_time.max(b.start_time);
    Some(ColocationEvent {
        day: clock.date(start),
        user_a: a.user_id.clone(),
        user_b: b.user_id.clone(),
        place: classify(a, b),
        overlap_start: start,
        overlap_end: a.end_time.min(b.end_time),
    })
}

/// All co-location events among `visits`, one per qualifying pair of visits
/// of different users. Candidate pairs come from a lat/lon grid whose cells
/// are at least `radius_m` wide everywhere in the data. Output is sorted.
pub fn detect_colocations(visits: &[Visit], cfg: &ColocationConfig, clock: &Clock) -> Vec<ColocationEvent> {
    if visits.is_empty() {
        return Vec::new();
    }
    let max_abs_lat = visits.iter().map(|v| v.lat.abs()).fold(0.0, f64::max).min(89.0);
    let cell_lat = (cfg.radius_m / EARTH_RADIUS_M).to_degrees() * 1.01;
    let cell_lon = cell_lat / max_abs_lat.to_radians().cos();
    let key = |v: &Visit| ((v.lat / cell_lat).floor() as i64, (v.lon / cell_lon).floor() as i64);

    let mut cells: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
    for (i, v) in visits.iter().enumerate() {
        cells.entry(key(v)).or_default().push(i);
    }
    let mut max_dur: HashMap<(i64, i64), i64> = HashMap::new();
    for (k, idx) in cells.iter_mut() {
        idx.sort_by_key(|&i| (visits[i].start_time, i));
        max_dur.insert(*k, idx.iter().map(|&i| visits[i].duration()).max().unwrap_or(0));
    }

    let mut out = Vec::new();
    for (i, a) in visits.iter().enumerate() {
        let (cy, cx) = key(a);
        for dy in -1..=1 {
            for dx in -1..=1 {
                let k = (cy + dy, cx + dx);
                let Some(idx) = cells.get(&k) else { continue };
                let earliest = a.start_time - max_dur[&k];
                let from = idx.partition_point(|&j| visits[j].start_time < earliest);
                for &j in &idx[from..] {
                    let b = &visits[j];
                    if b.start_time >= a.end_time {
                        break;
                    }
                    if j <= i {
                        continue;
                    }
                    if let Some(e) = event(a, b, cfg, clock) {
                        out.push(e);
                    }
                }
            }
        }
    }
    out.sort();
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::semantics::PoiRef;

    fn visit(user: &str, label: SemanticLabel, poi: Option<&str>, start_min: i64, end_min: i64, lat: f64) -> Visit {
        Visit {
            user_id: user.into(),
            location_id: 0,
            label,
            poi: poi.map(|p| PoiRef { poi_id: p.into(), l1: "Food".into(), l2: "Café".into() }),
            start_time: start_min * 60,
            end_time: end_min * 60,
            day: NaiveDate::from_ymd_opt(1970, 1, 1).unwrap(),
            lat,
            lon: -74.0,
        }
    }

    fn poi_label(id: &str) -> SemanticLabel {
        SemanticLabel::Poi(PoiRef { poi_id: id.into(), l1: "Food".into(), l2: "Café".into() })
    }

    #[test]
    fn same_poi_overlap() {
        let v = [
            visit("a", poi_label("p"), Some("p"), 600, 660, 40.0),
            visit("b", poi_label("p"), Some("p"), 630, 720, 40.0),
        ];
        let e = detect_colocations(&v, &ColocationConfig::default(), &Clock::default());
        assert_eq!(e.len(), 1);
        assert_eq!(e[0].place, Place::Poi("p".into()));
        assert_eq!(e[0].overlap_secs(), 30 * 60);
    }

    #[test]
    fn short_overlap_or_far_is_ignored() {
        let cfg = ColocationConfig::default();
        let v = [visit("a", SemanticLabel::Other, None, 0, 60, 40.0), visit("b", SemanticLabel::Other, None, 46, 90, 40.0)];
        assert!(detect_colocations(&v, &cfg, &Clock::default()).is_empty());
        let far = 40.0 + 51.0 / 111_195.0;
        let v = [visit("a", SemanticLabel::Other, None, 0, 60, 40.0), visit("b", SemanticLabel::Other, None, 0, 60, far)];
        assert!(detect_colocations(&v, &cfg, &Clock::default()).is_empty());
    }

    #[test]
    fn categories() {
        let home = visit("a", SemanticLabel::Residential, Some("p"), 0, 60, 40.0);
        let guest = visit("b", poi_label("p"), Some("p"), 0, 60, 40.0);
        assert_eq!(classify(&home, &guest), Place::Residential);
        let both_home = visit("b", SemanticLabel::Residential, None, 0, 60, 40.0);
        assert_eq!(classify(&home, &both_home), Place::Other);
        let w1 = visit("a", SemanticLabel::Workplace, Some("p"), 0, 60, 40.0);
        let w2 = visit("b", SemanticLabel::Workplace, Some("p"), 0, 60, 40.0);
        assert_eq!(classify(&w1, &w2), Place::Workplace);
        assert_eq!(classify(&w1, &guest), Place::Poi("p".into()));
        let other = visit("b", poi_label("q"), Some("q"), 0, 60, 40.0);
        assert_eq!(classify(&guest, &other), Place::Other);
    }

    #[test]
    fn same_user_never_colocates() {
        let v = [visit("a", SemanticLabel::Other, None, 0, 60, 40.0), visit("a", SemanticLabel::Other, None, 0, 60, 40.0)];
        assert!(detect_colocations(&v, &ColocationConfig::default(), &Clock::default()).is_empty());
    }
}
