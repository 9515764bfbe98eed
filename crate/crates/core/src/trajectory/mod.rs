//! From time-ordered GPS pings to stop events and stop locations.

mod dbscan;
mod stops;

pub use dbscan::{cluster_stop_locations, dbscan_labels};
pub use stops::{chunk_pings, detect_stop_events, detect_stop_events_chunked, medoid_index};

use serde::{Deserialize, Serialize};

use crate::geo::LatLon;
use crate::{Error, Result};

/// One timestamped fix. Pings are grouped per user in a [`Trajectory`], so the
/// user id is not repeated on every ping.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GpsPing {
    /// Seconds since the Unix epoch, UTC.
    pub timestamp: i64,
    pub lat: f64,
    pub lon: f64,
    /// Reported accuracy in meters. Carried through, never filtered on.
    pub accuracy: Option<f64>,
}

impl GpsPing {
    pub fn new(timestamp: i64, lat: f64, lon: f64) -> Self {
        GpsPing {
            timestamp,
            lat,
            lon,
            accuracy: None,
        }
    }

    pub fn position(&self) -> LatLon {
        LatLon::new(self.lat, self.lon)
    }
}

/// All pings of one user in time order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub user_id: String,
    pub pings: Vec<GpsPing>,
}

impl Trajectory {
    /// Fails on out-of-range coordinates, negative accuracy, or pings that go
    /// backwards in time.
    pub fn validate(&self) -> Result<()> {
        for (i, p) in self.pings.iter().enumerate() {
            if !p.position().is_valid() {
                return Err(Error::invalid(format!(
                    "user {} ping {i}: coordinates ({}, {}) out of range",
                    self.user_id, p.lat, p.lon
                )));
            }
            if p.accuracy.is_some_and(|a| !(a >= 0.0)) {
                return Err(Error::invalid(format!(
                    "user {} ping {i}: negative accuracy",
                    self.user_id
                )));
            }
        }
        ensure_sorted(&self.user_id, &self.pings)
    }
}

pub(crate) fn ensure_sorted(user_id: &str, pings: &[GpsPing]) -> Result<()> {
    match pings.windows(2).position(|w| w[1].timestamp < w[0].timestamp) {
        Some(i) => Err(Error::Unsorted {
            user_id: user_id.to_owned(),
            index: i + 1,
        }),
        None => Ok(()),
    }
}

/// Thresholds for stop detection and stop-location grouping.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StopConfig {
    /// Spatial threshold in meters.
    pub delta_s: f64,
    /// Temporal threshold in seconds.
    pub delta_t: i64,
    /// DBSCAN radius in meters.
    pub eps_dbscan: f64,
    pub min_points: usize,
}

impl Default for StopConfig {
    fn default() -> Self {
        StopConfig {
            delta_s: 65.0,
            delta_t: 300,
            eps_dbscan: 60.0,
            min_points: 1,
        }
    }
}

impl StopConfig {
    /// Config with `eps_dbscan` tied to `delta_s - 5`.
    pub fn with_thresholds(delta_s: f64, delta_t: i64) -> Self {
        StopConfig {
            delta_s,
            delta_t,
            eps_dbscan: delta_s - 5.0,
            min_points: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.delta_s > 0.0) {
            return Err(Error::config("delta_s must be positive"));
        }
        if self.delta_t <= 0 {
            return Err(Error::config("delta_t must be positive"));
        }
        if !(self.eps_dbscan > 0.0 && self.eps_dbscan <= self.delta_s) {
            return Err(Error::config("eps_dbscan must lie in (0, delta_s]"));
        }
        if self.min_points == 0 {
            return Err(Error::config("min_points must be at least 1"));
        }
        Ok(())
    }
}

/// A dwell interval: a maximal run of pings whose diameter stays below
/// `delta_s` for at least `delta_t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StopEvent {
    pub user_id: String,
    pub medoid_lat: f64,
    pub medoid_lon: f64,
    pub start_time: i64,
    pub end_time: i64,
    pub n_pings: usize,
    /// Mean of the member ping coordinates; stop-location centroids are built
    /// from these.
    pub mean_lat: f64,
    pub mean_lon: f64,
}

impl StopEvent {
    pub fn medoid(&self) -> LatLon {
        LatLon::new(self.medoid_lat, self.medoid_lon)
    }

    pub fn duration(&self) -> i64 {
        self.end_time - self.start_time
    }
}

/// A cluster of one user's stop events representing the same place.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StopLocation {
    pub user_id: String,
    /// Unique within the user; assigned in order of first visit.
    pub location_id: u32,
    pub centroid_lat: f64,
    pub centroid_lon: f64,
    pub member_events: Vec<StopEvent>,
}

impl StopLocation {
    /// Location over `member_events` (non-empty, one user) with the
    /// ping-weighted mean of the events' mean positions as centroid.
    pub fn from_events(location_id: u32, member_events: Vec<StopEvent>) -> Self {
        let (mut lat, mut lon, mut n) = (0.0, 0.0, 0.0);
        for e in &member_events {
            let k = e.n_pings as f64;
            lat += e.mean_lat * k;
            lon += e.mean_lon * k;
            n += k;
        }
        StopLocation {
            user_id: member_events[0].user_id.clone(),
            location_id,
            centroid_lat: lat / n,
            centroid_lon: lon / n,
            member_events,
        }
    }

    pub fn centroid(&self) -> LatLon {
        LatLon::new(self.centroid_lat, self.centroid_lon)
    }
}
