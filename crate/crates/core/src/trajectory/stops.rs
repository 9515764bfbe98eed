use super::{ensure_sorted, GpsPing, StopConfig, StopEvent};
use crate::geo::haversine;
use crate::Result;

/// Stop events of one user's time-ordered pings, scanning the whole sequence
/// with a left anchor.
///
/// From each anchor the window is first grown to the earliest ping at least
/// `delta_t` later. If that window is not narrower than `delta_s` the anchor
/// moves on by one ping; otherwise the window is extended while its diameter
/// stays below `delta_s`, emitted as one event, and scanning resumes after it.
pub fn detect_stop_events(user_id: &str, pings: &[GpsPing], cfg: &StopConfig) -> Result<Vec<StopEvent>> {
    ensure_sorted(user_id, pings)?;
    let mut out = Vec::new();
    scan(user_id, pings, cfg, &mut out);
    Ok(out)
}

/// Splits pings into buckets wherever two consecutive pings are more than
/// `delta_s` apart. No stop can straddle such a gap, so buckets can be scanned
/// independently.
pub fn chunk_pings<'a>(pings: &'a [GpsPing], cfg: &StopConfig) -> Vec<&'a [GpsPing]> {
    let mut buckets = Vec::new();
    let mut start = 0;
    for i in 1..pings.len() {
        if haversine(pings[i - 1].position(), pings[i].position()) > cfg.delta_s {
            buckets.push(&pings[start..i]);
            start = i;
        }
    }
    if start < pings.len() {
        buckets.push(&pings[start..]);
    }
    buckets
}

/// Bucketed detection; yields exactly what [`detect_stop_events`] yields.
pub fn detect_stop_events_chunked(
    user_id: &str,
    pings: &[GpsPing],
    cfg: &StopConfig,
) -> Result<Vec<StopEvent>> {
    ensure_sorted(user_id, pings)?;
    let mut out = Vec::new();
    for bucket in chunk_pings(pings, cfg) {
        scan(user_id, bucket, cfg, &mut out);
    }
    Ok(out)
}

fn scan(user_id: &str, pings: &[GpsPing], cfg: &StopConfig, out: &mut Vec<StopEvent>) {
    let n = pings.len();
    let mut window = Window::default();
    let mut left = 0;
    while left + 1 < n {
        let t_min = pings[left].timestamp + cfg.delta_t;
        let first = left + 1 + pings[left + 1..].partition_point(|p| p.timestamp < t_min);
        if first >= n {
            // No later ping is far enough in time; later anchors are even closer.
            break;
        }
        window.reset(left);
        let mut fits = true;
        for k in left + 1..=first {
            if !window.try_push(pings, k, cfg.delta_s) {
                fits = false;
                break;
            }
        }
        if !fits {
            left += 1;
            continue;
        }
        let mut right = first;
        while right + 1 < n && window.try_push(pings, right + 1, cfg.delta_s) {
            right += 1;
        }
        out.push(window.event(user_id, pings));
        left = right + 1;
    }
}

/// Growing window `[start, start + len)` with its running diameter and, per
/// member, the summed distance to every other member.
#[derive(Default)]
struct Window {
    start: usize,
    sums: Vec<f64>,
    scratch: Vec<f64>,
}

impl Window {
    fn reset(&mut self, start: usize) {
        self.start = start;
        self.sums.clear();
        self.sums.push(0.0);
    }

    /// Adds ping `k` if the diameter stays strictly below `limit`.
    fn try_push(&mut self, pings: &[GpsPing], k: usize, limit: f64) -> bool {
        let pk = pings[k].position();
        self.scratch.clear();
        for i in 0..self.sums.len() {
            let d = haversine(pings[self.start + i].position(), pk);
            if !(d < limit) {
                return false;
            }
            self.scratch.push(d);
        }
        let mut own = 0.0;
        for (sum, d) in self.sums.iter_mut().zip(&self.scratch) {
            *sum += d;
            own += d;
        }
        self.sums.push(own);
        true
    }

    fn event(&self, user_id: &str, pings: &[GpsPing]) -> StopEvent {
        let members = &pings[self.start..self.start + self.sums.len()];
        let m = argmin_first(&self.sums);
        let (lat, lon) = members
            .iter()
            .fold((0.0, 0.0), |(a, b), p| (a + p.lat, b + p.lon));
        let k = members.len() as f64;
        StopEvent {
            user_id: user_id.to_owned(),
            medoid_lat: members[m].lat,
            medoid_lon: members[m].lon,
            start_time: members[0].timestamp,
            end_time: members[members.len() - 1].timestamp,
            n_pings: members.len(),
            mean_lat: lat / k,
            mean_lon: lon / k,
        }
    }
}

fn argmin_first(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v < values[best] {
            best = i;
        }
    }
    best
}

/// Index of the member minimising the summed distance to all others; the
/// earliest member wins ties.
pub fn medoid_index(pings: &[GpsPing]) -> Option<usize> {
    if pings.is_empty() {
        return None;
    }
    let sums: Vec<f64> = pings
        .iter()
        .map(|p| {
            pings
                .iter()
                .map(|q| haversine(p.position(), q.position()))
                .sum::<f64>()
        })
        .collect();
    Some(argmin_first(&sums))
}
