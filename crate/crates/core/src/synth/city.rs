use std::collections::BTreeMap;

use chrono::{Duration, NaiveDate, NaiveTime};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::clock::{dates, weekday_index, Clock};
use crate::geo::{haversine, LatLon, LocalFrame, METERS_PER_DEGREE};
use crate::routines::user_seed;
use crate::semantics::{Geometry, Poi, Taxonomy, L1_CATEGORIES};
use crate::trajectory::{GpsPing, Trajectory};
use crate::{Error, Result};

/// Key for unlabelled errand places in rate and multiplier maps.
pub const OTHER_PLACES: &str = "Other";

/// Visit-rate changes from the shock date on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ShockSpec {
    pub date: NaiveDate,
    /// Share of scheduled visits kept, per first-level category or
    /// [`OTHER_PLACES`]. Missing categories keep all visits.
    pub multipliers: BTreeMap<String, f64>,
    /// Factor applied to visit dwell times.
    pub dwell_multiplier: f64,
}

impl Default for ShockSpec {
    fn default() -> Self {
        ShockSpec {
            date: NaiveDate::from_ymd_opt(2020, 3, 9).expect("valid date"),
            multipliers: BTreeMap::from([("Food".to_string(), 0.4)]),
            dwell_multiplier: 1.0,
        }
    }
}

/// Simulated city: places on a square, users following weekly schedules,
/// GPS pings sampled along the resulting timelines.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CitySpec {
    pub n_users: usize,
    /// Users who never leave home.
    pub stationary_users: usize,
    pub start: NaiveDate,
    pub n_days: u32,
    pub timezone: String,
    pub center_lat: f64,
    pub center_lon: f64,
    /// Side of the square holding every place, in meters.
    pub extent_m: f64,
    /// Minimum distance between any two places.
    pub min_spacing_m: f64,
    /// POIs per first-level category.
    pub poi_counts: BTreeMap<String, usize>,
    pub other_places: usize,
    pub workplaces: usize,
    pub worker_share: f64,
    /// Mean scheduled visits per user and week, per first-level category or
    /// [`OTHER_PLACES`].
    pub weekly_rates: BTreeMap<String, f64>,
    /// Most scheduled visits to the same place in a week.
    pub max_weekly_visits_per_place: usize,
    pub dwell_min_minutes: u32,
    pub dwell_max_minutes: u32,
    pub shock: ShockSpec,
    pub gps_noise_m: f64,
    pub pings_per_hour: f64,
    pub speed_mps: f64,
}

impl Default for CitySpec {
    fn default() -> Self {
        let poi_counts = [
            ("Arts & Entertainment", 8),
            ("College & University", 3),
            ("Food", 40),
            ("Nightlife Spot", 8),
            ("Outdoors & Recreation", 12),
            ("Professional & Other Places", 8),
            ("Shop & Service", 30),
            ("Travel & Transport", 6),
        ];
        let weekly_rates = [
            ("Arts & Entertainment", 0.4),
            ("College & University", 0.1),
            ("Food", 4.0),
            ("Nightlife Spot", 0.6),
            ("Outdoors & Recreation", 1.0),
            ("Professional & Other Places", 0.5),
            ("Shop & Service", 2.5),
            ("Travel & Transport", 0.3),
            (OTHER_PLACES, 1.0),
        ];
        CitySpec {
            n_users: 200,
            stationary_users: 0,
            start: NaiveDate::from_ymd_opt(2020, 2, 3).expect("valid date"),
            n_days: 70,
            timezone: "America/New_York".into(),
            center_lat: 40.70,
            center_lon: -74.00,
            extent_m: 6000.0,
            min_spacing_m: 200.0,
            poi_counts: poi_counts.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
            other_places: 20,
            workplaces: 40,
            worker_share: 0.7,
            weekly_rates: weekly_rates.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
            max_weekly_visits_per_place: 2,
            dwell_min_minutes: 30,
            dwell_max_minutes: 75,
            shock: ShockSpec::default(),
            gps_noise_m: 5.0,
            pings_per_hour: 6.0,
            speed_mps: 10.0,
        }
    }
}

impl CitySpec {
    pub fn end(&self) -> NaiveDate {
        self.start + Duration::days(self.n_days as i64 - 1)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_days == 0 {
            return Err(Error::config("n_days must be positive"));
        }
        if self.stationary_users > self.n_users {
            return Err(Error::config("stationary_users exceeds n_users"));
        }
        for (k, m) in &self.shock.multipliers {
            if !(*m > 0.0 && *m <= 1.0) {
                return Err(Error::config(format!("shock multiplier for {k} must lie in (0, 1]")));
            }
        }
        if !(self.shock.dwell_multiplier > 0.0 && self.shock.dwell_multiplier <= 3.0) {
            return Err(Error::config("dwell multiplier must lie in (0, 3]"));
        }
        if !(self.gps_noise_m >= 0.0) {
            return Err(Error::config("gps noise must be non-negative"));
        }
        if !(self.pings_per_hour > 0.0 && self.speed_mps > 0.0 && self.extent_m > 0.0) {
            return Err(Error::config("ping rate, speed and extent must be positive"));
        }
        if self.dwell_min_minutes < 10 || self.dwell_max_minutes < self.dwell_min_minutes {
            return Err(Error::config("dwell range must start at 10 minutes or more"));
        }
        if !(0.0..=1.0).contains(&self.worker_share) {
            return Err(Error::config("worker_share must lie in [0, 1]"));
        }
        if self.worker_share > 0.0 && self.workplaces == 0 {
            return Err(Error::config("workers need at least one workplace"));
        }
        for k in self.poi_counts.keys().chain(self.weekly_rates.keys()) {
            if k != OTHER_PLACES && !L1_CATEGORIES.contains(&k.as_str()) {
                return Err(Error::config(format!("unknown category {k:?}")));
            }
        }
        if self.weekly_rates.values().any(|r| !(*r >= 0.0)) {
            return Err(Error::config("weekly rates must be non-negative"));
        }
        Clock::parse(&self.timezone)?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PlaceKind {
    Home,
    Work,
    Poi,
    Other,
}

/// A stay in the generated timeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrueStay {
    pub user_id: String,
    pub kind: PlaceKind,
    pub place_id: String,
    /// First-level category for POI stays.
    pub category: Option<String>,
    pub start_time: i64,
    pub end_time: i64,
    pub lat: f64,
    pub lon: f64,
}

/// Two users at the same place with overlapping stays.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TrueColocation {
    pub place_id: String,
    pub user_a: String,
    pub user_b: String,
    pub overlap_start: i64,
    pub overlap_end: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticCity {
    pub trajectories: Vec<Trajectory>,
    pub pois: Vec<Poi>,
    pub stays: Vec<TrueStay>,
}

impl SyntheticCity {
    /// POI stays per local start date and first-level category.
    pub fn true_daily_counts(&self, clock: &Clock) -> BTreeMap<(NaiveDate, String), usize> {
        let mut out = BTreeMap::new();
        for s in self.stays.iter().filter(|s| s.kind == PlaceKind::Poi) {
            let cat = s.category.clone().unwrap_or_default();
            *out.entry((clock.date(s.start_time), cat)).or_insert(0) += 1;
        }
        out
    }

    /// Pairs of stays by different users at the same place overlapping by at
    /// least `min_overlap_s`.
    pub fn true_colocations(&self, min_overlap_s: i64) -> Vec<TrueColocation> {
        let mut by_place: BTreeMap<&str, Vec<&TrueStay>> = BTreeMap::new();
        for s in &self.stays {
            by_place.entry(&s.place_id).or_default().push(s);
        }
        let mut out = Vec::new();
        for (place, stays) in by_place {
            for (i, a) in stays.iter().enumerate() {
                for b in &stays[i + 1..] {
                    if a.user_id == b.user_id {
                        continue;
                    }
                    let lo = a.start_time.max(b.start_time);
                    let hi = a.end_time.min(b.end_time);
                    if hi - lo >= min_overlap_s {
                        let (ua, ub) = if a.user_id < b.user_id { (a, b) } else { (b, a) };
                        out.push(TrueColocation {
                            place_id: place.to_string(),
                            user_a: ua.user_id.clone(),
                            user_b: ub.user_id.clone(),
                            overlap_start: lo,
                            overlap_end: hi,
                        });
                    }
                }
            }
        }
        out.sort();
        out
    }
}

#[derive(Debug, Clone)]
struct Place {
    id: String,
    kind: PlaceKind,
    category: Option<String>,
    pos: LatLon,
}

#[derive(Debug, Clone, Copy)]
struct Slot {
    place: usize,
    start_min: u32,
    dwell_min: u32,
}

#[derive(Debug, Clone, Copy)]
struct Stay {
    place: usize,
    start: i64,
    end: i64,
}

fn place_positions(spec: &CitySpec, n: usize, rng: &mut ChaCha8Rng) -> Result<Vec<LatLon>> {
    let frame = LocalFrame::new(LatLon::new(spec.center_lat, spec.center_lon));
    let half = spec.extent_m / 2.0;
    let mut out: Vec<LatLon> = Vec::with_capacity(n);
    let mut attempts = 0usize;
    while out.len() < n {
        attempts += 1;
        if attempts > 1000 * n.max(1) {
            return Err(Error::config("cannot place all locations with the requested spacing; enlarge extent_m"));
        }
        let p = frame.unproject((rng.gen_range(-half..half), rng.gen_range(-half..half)));
        if out.iter().all(|q| haversine(p, *q) >= spec.min_spacing_m) {
            out.push(p);
        }
    }
    Ok(out)
}

fn build_places(spec: &CitySpec, taxonomy: &Taxonomy, rng: &mut ChaCha8Rng) -> Result<(Vec<Place>, Vec<Poi>)> {
    let n_poi: usize = spec.poi_counts.values().sum();
    let total = spec.n_users + spec.workplaces + n_poi + spec.other_places;
    let mut pos = place_positions(spec, total, rng)?.into_iter();
    let mut places = Vec::with_capacity(total);
    for u in 0..spec.n_users {
        places.push(Place {
            id: format!("home-{u:04}"),
            kind: PlaceKind::Home,
            category: None,
            pos: pos.next().expect("enough positions"),
        });
    }
    for w in 0..spec.workplaces {
        places.push(Place {
            id: format!("work-{w:03}"),
            kind: PlaceKind::Work,
            category: None,
            pos: pos.next().expect("enough positions"),
        });
    }
    let mut pois = Vec::with_capacity(n_poi);
    for (l1, count) in &spec.poi_counts {
        let l2s: Vec<&str> = taxonomy.l2_names().filter(|(a, _)| a == l1).map(|(_, b)| b).collect();
        if l2s.is_empty() && *count > 0 {
            return Err(Error::config(format!("taxonomy has no subcategories for {l1}")));
        }
        for k in 0..*count {
            let p = pos.next().expect("enough positions");
            let id = format!("poi-{:04}", pois.len());
            pois.push(Poi {
                poi_id: id.clone(),
                geometry: Geometry::Point(p),
                category_l1: l1.clone(),
                category_l2: l2s[k % l2s.len()].to_string(),
            });
            places.push(Place {
                id,
                kind: PlaceKind::Poi,
                category: Some(l1.clone()),
                pos: p,
            });
        }
    }
    for o in 0..spec.other_places {
        places.push(Place {
            id: format!("other-{o:03}"),
            kind: PlaceKind::Other,
            category: Some(OTHER_PLACES.into()),
            pos: pos.next().expect("enough positions"),
        });
    }
    Ok((places, pois))
}

/// Scheduled weekly visits: slots per weekday, non-overlapping and with at
/// least half an hour between consecutive ones for travel.
fn weekly_template(spec: &CitySpec, places: &[Place], worker: bool, rng: &mut ChaCha8Rng) -> [Vec<Slot>; 7] {
    let mut by_cat: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, p) in places.iter().enumerate() {
        if let Some(c) = &p.category {
            by_cat.entry(c).or_default().push(i);
        }
    }
    let mut per_day: [Vec<usize>; 7] = Default::default();
    let mut weekly_uses: BTreeMap<usize, usize> = BTreeMap::new();
    for (cat, rate) in &spec.weekly_rates {
        let Some(candidates) = by_cat.get(cat.as_str()) else { continue };
        let n = if *rate > 0.0 {
            Poisson::new(*rate).map(|d| d.sample(rng) as usize).unwrap_or(0)
        } else {
            0
        };
        for _ in 0..n {
            let open: Vec<usize> = candidates
                .iter()
                .copied()
                .filter(|p| weekly_uses.get(p).copied().unwrap_or(0) < spec.max_weekly_visits_per_place)
                .collect();
            let Some(&place) = open.choose(rng) else { break };
            *weekly_uses.entry(place).or_insert(0) += 1;
            per_day[rng.gen_range(0..7)].push(place);
        }
    }

    let gap = 30;
    let mut out: [Vec<Slot>; 7] = Default::default();
    for (w, chosen) in per_day.iter_mut().enumerate() {
        chosen.shuffle(rng);
        let (lo, hi) = if worker && w < 5 { (18 * 60, 22 * 60) } else { (10 * 60, 21 * 60) };
        let fit = ((hi - lo) / (spec.dwell_min_minutes + gap)) as usize;
        chosen.truncate(fit);
        if chosen.is_empty() {
            continue;
        }
        let seg = (hi - lo) / chosen.len() as u32;
        for (k, &place) in chosen.iter().enumerate() {
            let room = seg - gap;
            let dwell = rng.gen_range(spec.dwell_min_minutes..=spec.dwell_max_minutes).min(room);
            let offset = rng.gen_range(0..=room - dwell);
            out[w].push(Slot {
                place,
                start_min: lo + k as u32 * seg + offset,
                dwell_min: dwell,
            });
        }
    }
    out
}

fn travel_secs(spec: &CitySpec, a: LatLon, b: LatLon) -> i64 {
    (haversine(a, b) / spec.speed_mps).ceil() as i64 + 60
}

#[allow(clippy::too_many_arguments)]
fn user_timeline(
    spec: &CitySpec,
    clock: &Clock,
    places: &[Place],
    home: usize,
    work: Option<usize>,
    stationary: bool,
    template: &[Vec<Slot>; 7],
    rng: &mut ChaCha8Rng,
) -> Vec<Stay> {
    let period_start = clock.day_start(spec.start);
    let period_end = clock.day_start(spec.end() + Duration::days(1));
    let mut stays = Vec::new();
    let mut current = Stay {
        place: home,
        start: period_start,
        end: period_end,
    };
    if stationary {
        return vec![current];
    }
    let at = |d: NaiveDate, minutes: i64| clock.timestamp(d.and_time(NaiveTime::MIN) + Duration::minutes(minutes));
    let day_limit = 23 * 60 + 30;
    for d in dates(spec.start, spec.end()) {
        let w = weekday_index(d);
        let shocked = d >= spec.shock.date;
        // (place, arrival, departure) for the day's outings in order.
        let mut items: Vec<(usize, i64, i64)> = Vec::new();
        if let (Some(work), true) = (work, w < 5) {
            let leave = at(d, 8 * 60 + rng.gen_range(-20..=20));
            let arrive = leave + travel_secs(spec, places[home].pos, places[work].pos);
            let out = at(d, 17 * 60 + rng.gen_range(-15..=15));
            items.push((work, arrive, out));
        }
        for slot in &template[w] {
            let place = &places[slot.place];
            let mut dwell = slot.dwell_min as f64;
            if shocked {
                let keep = place
                    .category
                    .as_ref()
                    .and_then(|c| spec.shock.multipliers.get(c))
                    .copied()
                    .unwrap_or(1.0);
                // Always draw so the random stream does not depend on the multiplier.
                let u: f64 = rng.gen();
                if u >= keep {
                    continue;
                }
                dwell *= spec.shock.dwell_multiplier;
            }
            let mut arrive = at(d, slot.start_min as i64);
            if let Some(&(prev, _, leave)) = items.last() {
                arrive = arrive.max(leave + travel_secs(spec, places[prev].pos, place.pos));
            }
            let depart = (arrive + (dwell * 60.0).round() as i64).min(at(d, day_limit));
            if depart - arrive < 10 * 60 {
                continue;
            }
            items.push((slot.place, arrive, depart));
        }
        let mut here = home;
        for (place, arrive, depart) in items {
            current.end = arrive - travel_secs(spec, places[here].pos, places[place].pos);
            stays.push(current);
            current = Stay {
                place,
                start: arrive,
                end: depart,
            };
            here = place;
        }
        if here != home {
            let back = current.end + travel_secs(spec, places[here].pos, places[home].pos);
            stays.push(current);
            current = Stay {
                place: home,
                start: back,
                end: period_end,
            };
        }
    }
    current.end = period_end;
    stays.push(current);
    stays
}

fn noisy(p: LatLon, sd: f64, rng: &mut ChaCha8Rng) -> LatLon {
    if sd == 0.0 {
        return p;
    }
    let dy: f64 = rng.sample::<f64, _>(StandardNormal) * sd;
    let dx: f64 = rng.sample::<f64, _>(StandardNormal) * sd;
    LatLon::new(
        p.lat + dy / METERS_PER_DEGREE,
        p.lon + dx / (METERS_PER_DEGREE * p.lat.to_radians().cos()),
    )
}

/// Pings at jittered regular intervals, always including both ends of the
/// period. Positions inside a stay are the place plus noise; between stays
/// they move linearly.
fn sample_pings(spec: &CitySpec, places: &[Place], stays: &[Stay], rng: &mut ChaCha8Rng) -> Vec<GpsPing> {
    let Some(last) = stays.last() else { return Vec::new() };
    let (t0, t1) = (stays[0].start, last.end);
    let mean_gap = 3600.0 / spec.pings_per_hour;
    let mut pings = Vec::new();
    let mut k = 0usize;
    let mut t = t0;
    loop {
        while k + 1 < stays.len() && t >= stays[k + 1].start {
            k += 1;
        }
        let s = stays[k];
        let pos = if t <= s.end || k + 1 == stays.len() {
            places[s.place].pos
        } else {
            let next = stays[k + 1];
            let f = (t - s.end) as f64 / (next.start - s.end).max(1) as f64;
            let (a, b) = (places[s.place].pos, places[next.place].pos);
            LatLon::new(a.lat + f * (b.lat - a.lat), a.lon + f * (b.lon - a.lon))
        };
        let p = noisy(pos, spec.gps_noise_m, rng);
        pings.push(GpsPing::new(t, p.lat, p.lon));
        if t >= t1 {
            break;
        }
        let step = (mean_gap * rng.gen_range(0.8..1.2)).round().max(1.0) as i64;
        t = (t + step).min(t1);
    }
    pings
}

/// Generates the city, its users' timelines and their pings. Deterministic
/// for a given spec and seed.
pub fn generate_city(spec: &CitySpec, seed: u64) -> Result<SyntheticCity> {
    spec.validate()?;
    let clock = Clock::parse(&spec.timezone)?;
    let taxonomy = Taxonomy::builtin();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (places, pois) = build_places(spec, &taxonomy, &mut rng)?;
    let work_ids: Vec<usize> = places
        .iter()
        .enumerate()
        .filter(|(_, p)| p.kind == PlaceKind::Work)
        .map(|(i, _)| i)
        .collect();

    let per_user: Vec<(Trajectory, Vec<TrueStay>)> = (0..spec.n_users)
        .into_par_iter()
        .map(|u| {
            let user_id = format!("u{u:04}");
            let mut rng = ChaCha8Rng::seed_from_u64(user_seed(seed, &user_id));
            let stationary = u < spec.stationary_users;
            let worker = rng.gen::<f64>() < spec.worker_share;
            let work = (worker && !work_ids.is_empty()).then(|| work_ids[rng.gen_range(0..work_ids.len())]);
            let template = weekly_template(spec, &places, work.is_some(), &mut rng);
            let stays = user_timeline(spec, &clock, &places, u, work, stationary, &template, &mut rng);
            let pings = sample_pings(spec, &places, &stays, &mut rng);
            let truth = stays
                .iter()
                .map(|s| {
                    let p = &places[s.place];
                    TrueStay {
                        user_id: user_id.clone(),
                        kind: p.kind,
                        place_id: p.id.clone(),
                        category: p.category.clone().filter(|_| p.kind == PlaceKind::Poi),
                        start_time: s.start,
                        end_time: s.end,
                        lat: p.pos.lat,
                        lon: p.pos.lon,
                    }
                })
                .collect();
            (Trajectory { user_id, pings }, truth)
        })
        .collect();

    let mut trajectories = Vec::with_capacity(per_user.len());
    let mut stays = Vec::new();
    for (t, s) in per_user {
        trajectories.push(t);
        stays.extend(s);
    }
    Ok(SyntheticCity {
        trajectories,
        pois,
        stays,
    })
}
