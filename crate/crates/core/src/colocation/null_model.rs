use std::collections::{BTreeMap, BTreeSet};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::{ColocationEvent, Place};
use crate::semantics::Visit;
use crate::{Error, Result};

pub const DAY_MINUTES: f64 = 1440.0;

/// Probability that two stays of `duration` minutes, placed independently
/// and uniformly on a circular day of `day_len` minutes, overlap by at least
/// `eps` minutes.
pub fn expected_colocation_prob(duration: f64, eps: f64, day_len: f64) -> f64 {
    let d = duration.min(day_len);
    if d < eps {
        0.0
    } else if 2.0 * d - day_len >= eps {
        1.0
    } else {
        (2.0 * (d - eps) / day_len).min(1.0)
    }
}

/// `C(n, 2) * p`.
pub fn expected_colocation_count(n: usize, p: f64) -> f64 {
    let n = n as f64;
    n * (n - 1.0) / 2.0 * p
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DurationFormula {
    /// Mean overlap of two uniformly placed stays given an overlap of at
    /// least `eps`.
    #[default]
    Conditional,
    /// `(d - 15) / 2`.
    HalfExcess,
}

/// Expected overlap in minutes of two stays of mean length `duration` given
/// that they co-locate.
///
/// Up to `(day_len + eps) / 2` the overlap is uniform on `[eps, d]`, giving
/// `(d + eps) / 2`. Longer stays on the circular day always overlap and can
/// wrap around, and the exact circular mean is used instead.
pub fn expected_colocation_duration(duration: f64, eps: f64, day_len: f64, formula: DurationFormula) -> Result<f64> {
    if !(duration > eps) {
        return Err(Error::Undefined("expected overlap needs a stay longer than the overlap threshold"));
    }
    if formula == DurationFormula::HalfExcess {
        return Ok((duration - 15.0) / 2.0);
    }
    let d = duration.min(day_len);
    if 2.0 * d - day_len < eps {
        return Ok((d + eps) / 2.0);
    }
    let l = day_len;
    Ok(2.0 / l * (d * (l - d) - (l - d).powi(2) / 2.0 + (d - l / 2.0) * (2.0 * d - l)))
}

/// Observed and expected co-location at one POI on one day.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NullModelRow {
    pub poi_id: String,
    pub day: NaiveDate,
    /// Distinct visitors.
    pub n: usize,
    pub median_duration: f64,
    pub mean_duration: f64,
    pub observed_events: usize,
    pub expected_events: f64,
    /// Median overlap of observed events, minutes.
    pub observed_overlap: Option<f64>,
    pub expected_overlap: Option<f64>,
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

/// Per POI and day: visitors, stay durations and observed events against
/// the null-model expectations. Counts use the median stay, overlaps the mean.
pub fn null_model_report(
    visits: &[Visit],
    events: &[ColocationEvent],
    eps_min: f64,
    formula: DurationFormula,
) -> Vec<NullModelRow> {
    let mut stays: BTreeMap<(String, NaiveDate), (BTreeSet<&str>, Vec<f64>)> = BTreeMap::new();
    for v in visits {
        if let Some(p) = &v.poi {
            let e = stays.entry((p.poi_id.clone(), v.day)).or_default();
            e.0.insert(&v.user_id);
            e.1.push(v.duration() as f64 / 60.0);
        }
    }
    let mut observed: BTreeMap<(String, NaiveDate), Vec<f64>> = BTreeMap::new();
    for e in events {
        if let Place::Poi(id) = &e.place {
            observed
                .entry((id.clone(), e.day))
                .or_default()
                .push(e.overlap_secs() as f64 / 60.0);
        }
    }
    stays
        .into_iter()
        .map(|((poi_id, day), (users, mut durations))| {
            let mean = durations.iter().sum::<f64>() / durations.len() as f64;
            let med = median(&mut durations);
            let n = users.len();
            let mut obs = observed.remove(&(poi_id.clone(), day)).unwrap_or_default();
            NullModelRow {
                expected_events: expected_colocation_count(n, expected_colocation_prob(med, eps_min, DAY_MINUTES)),
                expected_overlap: expected_colocation_duration(mean, eps_min, DAY_MINUTES, formula).ok(),
                observed_events: obs.len(),
                observed_overlap: (!obs.is_empty()).then(|| median(&mut obs)),
                poi_id,
                day,
                n,
                median_duration: med,
                mean_duration: mean,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn probability_cases() {
        assert_eq!(expected_colocation_prob(10.0, 15.0, DAY_MINUTES), 0.0);
        assert!((expected_colocation_prob(375.0, 15.0, DAY_MINUTES) - 0.5).abs() < 1e-12);
        assert_eq!(expected_colocation_prob(1440.0, 15.0, DAY_MINUTES), 1.0);
        assert_eq!(expected_colocation_prob(727.5, 15.0, DAY_MINUTES), 1.0);
    }

    #[test]
    fn probability_monotone_and_bounded() {
        let mut last = 0.0;
        for k in 0..=3000 {
            let p = expected_colocation_prob(k as f64 * 0.5, 15.0, DAY_MINUTES);
            assert!((0.0..=1.0).contains(&p) && p >= last);
            last = p;
        }
    }

    #[test]
    fn count_cases() {
        assert_eq!(expected_colocation_count(1, 0.7), 0.0);
        assert_eq!(expected_colocation_count(3, 0.5), 1.5);
        assert_eq!(expected_colocation_count(10, 0.0), 0.0);
    }

    #[test]
    fn duration_cases() {
        let f = DurationFormula::Conditional;
        assert_eq!(expected_colocation_duration(45.0, 15.0, DAY_MINUTES, f).unwrap(), 30.0);
        assert!((expected_colocation_duration(15.0 + 1e-9, 15.0, DAY_MINUTES, f).unwrap() - 15.0).abs() < 1e-6);
        assert!(expected_colocation_duration(15.0, 15.0, DAY_MINUTES, f).is_err());
        assert!((expected_colocation_duration(1440.0, 15.0, DAY_MINUTES, f).unwrap() - 1440.0).abs() < 1e-9);
        assert_eq!(expected_colocation_duration(45.0, 15.0, DAY_MINUTES, DurationFormula::HalfExcess).unwrap(), 15.0);
    }

    /// Mean of the circular overlap over a fine grid of offsets, restricted
    /// to offsets reaching the threshold.
    fn quadrature(d: f64, eps: f64) -> (f64, f64) {
        let steps = 200_000;
        let (mut hit, mut sum) = (0usize, 0.0);
        for k in 0..steps {
            let x = (k as f64 + 0.5) * DAY_MINUTES / steps as f64;
            let ov = (d - x).max(0.0) + (d - DAY_MINUTES + x).max(0.0);
            if ov >= eps {
                hit += 1;
                sum += ov;
            }
        }
        (hit as f64 / steps as f64, sum / hit as f64)
    }

    #[test]
    fn matches_offset_quadrature() {
        for d in [16.0, 100.0, 720.0, 727.0, 728.0, 900.0, 1300.0, 1440.0] {
            let (p, o) = quadrature(d, 15.0);
            assert!((expected_colocation_prob(d, 15.0, DAY_MINUTES) - p).abs() < 1e-4, "p at {d}");
            let e = expected_colocation_duration(d, 15.0, DAY_MINUTES, DurationFormula::Conditional).unwrap();
            assert!((e - o).abs() < 1e-2, "overlap at {d}: {e} vs {o}");
        }
    }
}
