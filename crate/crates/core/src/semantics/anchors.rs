use std::collections::BTreeMap;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::clock::{self, Clock, SECS_PER_DAY};
use crate::trajectory::StopLocation;

const HOUR: i64 = 3600;
/// Half-width of the anchor window in days: `[d - 14, d + 14)`.
pub const ANCHOR_HALF_WINDOW_DAYS: i64 = 14;
const NIGHT: [(i64, i64); 2] = [(0, 4 * HOUR), (20 * HOUR, 24 * HOUR)];
const WORK: (i64, i64) = (9 * HOUR, 17 * HOUR);
const MIN_WORK_STAY: i64 = 30 * 60;
const WORK_VISITS_PER_WEEK: f64 = 5.0;

/// Work-hour dwell of one location over a window.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorkStats {
    pub seconds: i64,
    /// Stays of at least 30 minutes touching weekday working hours.
    pub visits: u32,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DayAnchors {
    pub residential: Option<u32>,
    pub workplace: Option<u32>,
}

/// Per-day anchors of one user.
pub type AnchorWindows = BTreeMap<NaiveDate, DayAnchors>;

/// Location with the largest night-time dwell, if any dwell is positive.
/// Ties go to the smaller location id.
pub fn infer_residential(night_seconds: &BTreeMap<u32, i64>) -> Option<u32> {
    argmax(night_seconds.iter().map(|(id, s)| (*id, *s)))
}

/// Location with the largest work-hour dwell among those visited often enough,
/// excluding the residential location.
pub fn infer_workplace(
    work: &BTreeMap<u32, WorkStats>,
    residential: Option<u32>,
    min_visits: f64,
) -> Option<u32> {
    argmax(
        work.iter()
            .filter(|(id, w)| Some(**id) != residential && w.visits as f64 >= min_visits)
            .map(|(id, w)| (*id, w.seconds)),
    )
}

fn argmax(items: impl Iterator<Item = (u32, i64)>) -> Option<u32> {
    let mut best: Option<(u32, i64)> = None;
    for (id, v) in items {
        if v <= 0 {
            continue;
        }
        match best {
            Some((bid, bv)) if v < bv || (v == bv && id > bid) => {}
            _ => best = Some((id, v)),
        }
    }
    best.map(|(id, _)| id)
}

#[derive(Default, Clone)]
struct DayTotals {
    night: BTreeMap<u32, i64>,
    work: BTreeMap<u32, WorkStats>,
}

/// Residential and workplace anchors of one user for every day between the
/// first and last stop, each computed over the surrounding 28-day window.
///
/// Night time is 20:00-04:00 local, with each part counted toward the calendar
/// day it falls on. Work time is weekday 09:00-17:00 local, counted only for
/// stays of at least 30 minutes; a workplace needs an average of five such
/// stays per week over the part of the window the user was observed.
pub fn compute_anchor_windows(locations: &[StopLocation], clock: &Clock) -> AnchorWindows {
    let mut per_day: BTreeMap<i64, DayTotals> = BTreeMap::new();
    let (mut first_day, mut last_day) = (i64::MAX, i64::MIN);

    for loc in locations {
        for ev in &loc.member_events {
            let start = clock.local_secs(ev.start_time);
            let end = start + ev.duration();
            first_day = first_day.min(clock::local_day(start));
            last_day = last_day.max(clock::local_day(end));
            let long_enough = ev.duration() >= MIN_WORK_STAY;
            let mut counted_visit = false;
            let mut day = clock::local_day(start);
            while day * SECS_PER_DAY < end {
                let base = day * SECS_PER_DAY;
                let totals = per_day.entry(day).or_default();
                let night: i64 = NIGHT
                    .iter()
                    .map(|(a, b)| clock::overlap((start, end), (base + a, base + b)))
                    .sum();
                if night > 0 {
                    *totals.night.entry(loc.location_id).or_default() += night;
                }
                if long_enough && clock::is_weekday(clock::date_of_local_day(day)) {
                    let work = clock::overlap((start, end), (base + WORK.0, base + WORK.1));
                    if work > 0 {
                        let w = totals.work.entry(loc.location_id).or_default();
                        w.seconds += work;
                        if !counted_visit {
                            w.visits += 1;
                            counted_visit = true;
                        }
                    }
                }
                day += 1;
            }
        }
    }

    let mut out = AnchorWindows::new();
    if first_day > last_day {
        return out;
    }
    for day in first_day..=last_day {
        let lo = day - ANCHOR_HALF_WINDOW_DAYS;
        let hi = day + ANCHOR_HALF_WINDOW_DAYS;
        let mut night: BTreeMap<u32, i64> = BTreeMap::new();
        let mut work: BTreeMap<u32, WorkStats> = BTreeMap::new();
        for (_, totals) in per_day.range(lo..hi) {
            for (id, s) in &totals.night {
                *night.entry(*id).or_default() += s;
            }
            for (id, w) in &totals.work {
                let e = work.entry(*id).or_default();
                e.seconds += w.seconds;
                e.visits += w.visits;
            }
        }
        let observed_days = (hi.min(last_day + 1) - lo.max(first_day)) as f64;
        let min_visits = WORK_VISITS_PER_WEEK * observed_days / 7.0;
        let residential = infer_residential(&night);
        let workplace = infer_workplace(&work, residential, min_visits);
        out.insert(
            clock::date_of_local_day(day),
            DayAnchors {
                residential,
                workplace,
            },
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trajectory::StopEvent;
    use chrono::{Duration, NaiveDate};

    #[test]
    fn residential_single_location() {
        let night = BTreeMap::from([(3, 8 * HOUR)]);
        assert_eq!(infer_residential(&night), Some(3));
    }

    #[test]
    fn residential_largest_sum_wins() {
        let night = BTreeMap::from([(1, 10 * HOUR), (2, 40 * HOUR)]);
        assert_eq!(infer_residential(&night), Some(2));
    }

    #[test]
    fn residential_none_without_night_time() {
        assert_eq!(infer_residential(&BTreeMap::new()), None);
        assert_eq!(infer_residential(&BTreeMap::from([(1, 0)])), None);
    }

    #[test]
    fn workplace_excludes_residential() {
        let work = BTreeMap::from([
            (1, WorkStats { seconds: 100 * HOUR, visits: 25 }),
            (2, WorkStats { seconds: 30 * HOUR, visits: 20 }),
        ]);
        assert_eq!(infer_workplace(&work, Some(1), 20.0), Some(2));
        let only_home = BTreeMap::from([(1, WorkStats { seconds: 100 * HOUR, visits: 25 })]);
        assert_eq!(infer_workplace(&only_home, Some(1), 20.0), None);
    }

    #[test]
    fn workplace_largest_eligible_wins() {
        let work = BTreeMap::from([
            (1, WorkStats { seconds: 80 * HOUR, visits: 20 }),
            (2, WorkStats { seconds: 30 * HOUR, visits: 20 }),
            (3, WorkStats { seconds: 200 * HOUR, visits: 4 }),
        ]);
        assert_eq!(infer_workplace(&work, None, 20.0), Some(1));
    }

    fn ev(start: i64, end: i64) -> StopEvent {
        StopEvent {
            user_id: "u".into(),
            medoid_lat: 0.0,
            medoid_lon: 0.0,
            start_time: start,
            end_time: end,
            n_pings: 2,
            mean_lat: 0.0,
            mean_lon: 0.0,
        }
    }

    fn loc(id: u32, events: Vec<StopEvent>) -> StopLocation {
        StopLocation {
            user_id: "u".into(),
            location_id: id,
            centroid_lat: 0.0,
            centroid_lon: 0.0,
            member_events: events,
        }
    }

    /// Four weeks of nights at home, weekday 9-5 at an office, and either
    /// 20-minute or hour-long weekday lunches.
    fn month(lunch_minutes: i64) -> (Vec<StopLocation>, NaiveDate) {
        let clock = Clock::default();
        let monday = NaiveDate::from_ymd_opt(2020, 2, 3).unwrap();
        let (mut home, mut office, mut lunch) = (vec![], vec![], vec![]);
        for d in 0..28 {
            let date = monday + Duration::days(d);
            let base = clock.day_start(date);
            home.push(ev(base - 4 * HOUR, base + 8 * HOUR));
            if clock::is_weekday(date) {
                office.push(ev(base + 9 * HOUR, base + 12 * HOUR));
                lunch.push(ev(base + 12 * HOUR, base + 12 * HOUR + lunch_minutes * 60));
                office.push(ev(base + 13 * HOUR, base + 17 * HOUR));
            }
        }
        (vec![loc(0, home), loc(1, office), loc(2, lunch)], monday + Duration::days(14))
    }

    #[test]
    fn windows_find_home_and_office() {
        let (locs, mid) = month(20);
        let anchors = compute_anchor_windows(&locs, &Clock::default());
        let a = anchors[&mid];
        assert_eq!(a.residential, Some(0));
        assert_eq!(a.workplace, Some(1));
    }

    #[test]
    fn anchors_ignore_input_order() {
        let (mut locs, mid) = month(60);
        let a = compute_anchor_windows(&locs, &Clock::default());
        locs.reverse();
        for l in &mut locs {
            l.member_events.reverse();
        }
        assert_eq!(a, compute_anchor_windows(&locs, &Clock::default()));
        assert_eq!(a[&mid].workplace, Some(1));
    }
}
