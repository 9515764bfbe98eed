use super::{compute_anchor_windows, match_poi, AnchorWindows, PoiIndex, PoiRef, SemanticLabel, Visit};
use crate::clock::Clock;
use crate::trajectory::StopLocation;

/// Turns every member event of `locations` into a [`Visit`], labelled by
/// precedence Residential > Workplace > POI > Other. Anchors are looked up on
/// the local date of the event start. Output is sorted by start time.
pub fn label_visits(
    locations: &[StopLocation],
    anchors: &AnchorWindows,
    pois: &PoiIndex,
    radius: f64,
    clock: &Clock,
) -> Vec<Visit> {
    let mut out = Vec::new();
    for loc in locations {
        let poi: Option<PoiRef> = match_poi(pois, loc.centroid(), radius).map(|m| m.poi.to_ref());
        for ev in &loc.member_events {
            let day = clock.date(ev.start_time);
            let a = anchors.get(&day).copied().unwrap_or_default();
            let label = if a.residential == Some(loc.location_id) {
                SemanticLabel::Residential
            } else if a.workplace == Some(loc.location_id) {
                SemanticLabel::Workplace
            } else if let Some(p) = &poi {
                SemanticLabel::Poi(p.clone())
            } else {
                SemanticLabel::Other
            };
            out.push(Visit {
                user_id: loc.user_id.clone(),
                location_id: loc.location_id,
                label,
                poi: poi.clone(),
                start_time: ev.start_time,
                end_time: ev.end_time,
                day,
                lat: loc.centroid_lat,
                lon: loc.centroid_lon,
            });
        }
    }
    out.sort_by_key(|v| (v.start_time, v.location_id));
    out
}

/// Anchors plus labels for one user's stop locations.
pub fn annotate_user(locations: &[StopLocation], pois: &PoiIndex, radius: f64, clock: &Clock) -> Vec<Visit> {
    let anchors = compute_anchor_windows(locations, clock);
    label_visits(locations, &anchors, pois, radius, clock)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::LatLon;
    use crate::semantics::{DayAnchors, Geometry, Poi};
    use crate::trajectory::StopEvent;
    use chrono::NaiveDate;

    fn location(id: u32, lat: f64, lon: f64) -> StopLocation {
        StopLocation {
            user_id: "u".into(),
            location_id: id,
            centroid_lat: lat,
            centroid_lon: lon,
            member_events: vec![StopEvent {
                user_id: "u".into(),
                medoid_lat: lat,
                medoid_lon: lon,
                start_time: 3600 * (id as i64 + 1),
                end_time: 3600 * (id as i64 + 2),
                n_pings: 3,
                mean_lat: lat,
                mean_lon: lon,
            }],
        }
    }

    fn cafe_near(lat: f64, lon: f64) -> PoiIndex {
        PoiIndex::new(vec![Poi {
            poi_id: "cafe".into(),
            geometry: Geometry::Point(LatLon::new(lat + 5.0 / 111_195.0, lon)),
            category_l1: "Food".into(),
            category_l2: "Café".into(),
        }])
    }

    fn anchors(res: Option<u32>, work: Option<u32>) -> AnchorWindows {
        let day = NaiveDate::from_ymd_opt(1970, 1, 1).unwrap();
        AnchorWindows::from([(day, DayAnchors { residential: res, workplace: work })])
    }

    #[test]
    fn residential_beats_nearby_poi() {
        let locs = [location(0, 40.0, -74.0)];
        let v = label_visits(&locs, &anchors(Some(0), None), &cafe_near(40.0, -74.0), 65.0, &Clock::default());
        assert_eq!(v[0].label, SemanticLabel::Residential);
        assert_eq!(v[0].poi.as_ref().unwrap().poi_id, "cafe");
    }

    #[test]
    fn precedence_over_all_kinds() {
        let locs = [location(0, 40.0, -74.0), location(1, 40.1, -74.0), location(2, 40.2, -74.0), location(3, 40.3, -74.0)];
        let v = label_visits(&locs, &anchors(Some(0), Some(1)), &cafe_near(40.2, -74.0), 65.0, &Clock::default());
        let kinds: Vec<_> = v.iter().map(|v| v.label.kind()).collect();
        assert_eq!(kinds, ["Residential", "Workplace", "POI", "Other"]);
    }
}
