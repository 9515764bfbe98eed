use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::clock;
use crate::geo::{haversine, weighted_mean, LatLon};
use crate::semantics::{SemanticLabel, Visit};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    #[default]
    Visits,
    Time,
}

/// Fractions of covered time by place kind; they sum to 1.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct TimeShares {
    pub residential: f64,
    pub workplace: f64,
    pub poi: f64,
    pub other: f64,
    pub moving: f64,
}

impl TimeShares {
    pub fn sum(&self) -> f64 {
        self.residential + self.workplace + self.poi + self.other + self.moving
    }

    pub fn as_pairs(&self) -> [(&'static str, f64); 5] {
        [
            ("Residential", self.residential),
            ("Workplace", self.workplace),
            ("POI", self.poi),
            ("Other", self.other),
            ("Moving", self.moving),
        ]
    }
}

/// Time seconds by place kind within `coverage`, with the covered time not
/// inside any visit counted as moving. Returns `None` for empty coverage.
pub fn time_seconds(visits: &[Visit], coverage: (i64, i64)) -> Option<TimeShares> {
    let span = coverage.1 - coverage.0;
    if span <= 0 {
        return None;
    }
    let mut t = TimeShares::default();
    for v in visits {
        let s = clock::overlap((v.start_time, v.end_time), coverage) as f64;
        match v.label {
            SemanticLabel::Residential => t.residential += s,
            SemanticLabel::Workplace => t.workplace += s,
            SemanticLabel::Poi(_) => t.poi += s,
            SemanticLabel::Other => t.other += s,
        }
    }
    let stopped = t.residential + t.workplace + t.poi + t.other;
    t.moving = (span as f64 - stopped).max(0.0);
    Some(t)
}

/// Shares of `coverage` spent at each place kind or moving, renormalised
/// to the covered time.
pub fn time_allocation(visits: &[Visit], coverage: (i64, i64)) -> Option<TimeShares> {
    let t = time_seconds(visits, coverage)?;
    let total = t.sum();
    if total <= 0.0 {
        return None;
    }
    Some(TimeShares {
        residential: t.residential / total,
        workplace: t.workplace / total,
        poi: t.poi / total,
        other: t.other / total,
        moving: t.moving / total,
    })
}

/// Normalised Shannon entropy of the positive weights; 0 for a single one.
pub fn location_entropy(weights: &[f64]) -> f64 {
    let w: Vec<f64> = weights.iter().copied().filter(|w| *w > 0.0).collect();
    if w.len() < 2 {
        return 0.0;
    }
    let total: f64 = w.iter().sum();
    let h: f64 = w.iter().map(|x| x / total).map(|p| -p * p.ln()).sum();
    (h / (w.len() as f64).ln()).clamp(0.0, 1.0)
}

/// `sqrt(sum n_l d(r_l, r_cm)^2 / N)` with `r_cm` the weighted mean position.
pub fn radius_of_gyration(points: &[(LatLon, f64)]) -> Result<f64> {
    let total: f64 = points.iter().map(|(_, w)| w).sum();
    if !(total > 0.0) {
        return Err(Error::invalid("radius of gyration needs a positive total weight"));
    }
    let cm = weighted_mean(points.iter().copied()).expect("positive weight");
    let ss: f64 = points.iter().map(|(p, w)| w * haversine(*p, cm).powi(2)).sum();
    Ok((ss / total).sqrt())
}

/// Per-location weights and positions: visit counts or dwell seconds.
pub fn location_weights(visits: &[Visit], weighting: Weighting) -> Vec<(LatLon, f64)> {
    let mut by_loc: BTreeMap<u32, (LatLon, f64)> = BTreeMap::new();
    for v in visits {
        let e = by_loc.entry(v.location_id).or_insert((v.position(), 0.0));
        e.1 += match weighting {
            Weighting::Visits => 1.0,
            Weighting::Time => v.duration() as f64,
        };
    }
    by_loc.into_values().collect()
}

/// Individual mobility metrics over a set of visits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowMetrics {
    pub unique_stops: usize,
    pub entropy: f64,
    pub radius_of_gyration: f64,
}

pub fn window_metrics(visits: &[Visit], weighting: Weighting) -> Option<WindowMetrics> {
    let w = location_weights(visits, weighting);
    if w.is_empty() {
        return None;
    }
    let weights: Vec<f64> = w.iter().map(|(_, x)| *x).collect();
    Some(WindowMetrics {
        unique_stops: w.len(),
        entropy: location_entropy(&weights),
        radius_of_gyration: radius_of_gyration(&w).ok()?,
    })
}
