use std::collections::BTreeMap;
use std::io::Write;

use chrono::{Duration, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::clock::{dates, weekday_index};
use crate::semantics::{SemanticLabel, Taxonomy, Visit};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SeriesKey {
    pub cohort: String,
    pub metric: String,
    pub category: Option<String>,
}

impl SeriesKey {
    pub fn new(cohort: &str, metric: &str, category: Option<&str>) -> Self {
        SeriesKey {
            cohort: cohort.to_string(),
            metric: metric.to_string(),
            category: category.map(str::to_string),
        }
    }
}

/// Values by date; `None` marks a day without a defined value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DailySeries {
    pub key: SeriesKey,
    pub values: BTreeMap<NaiveDate, Option<f64>>,
}

impl DailySeries {
    pub fn new(key: SeriesKey) -> Self {
        DailySeries {
            key,
            values: BTreeMap::new(),
        }
    }

    pub fn get(&self, d: NaiveDate) -> Option<f64> {
        self.values.get(&d).copied().flatten()
    }
}

/// How per-user window values are combined across users.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregate {
    #[default]
    Median,
    Mean,
}

impl Aggregate {
    pub fn apply(self, values: &mut [f64]) -> Option<f64> {
        match self {
            Aggregate::Median => median(values),
            Aggregate::Mean => (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowConfig {
    pub window_len: i64,
    pub shift: i64,
    pub baseline_start: NaiveDate,
    pub baseline_end: NaiveDate,
    pub aggregate: Aggregate,
}

impl WindowConfig {
    pub fn new(baseline_start: NaiveDate, baseline_end: NaiveDate) -> Self {
        WindowConfig {
            window_len: 14,
            shift: 1,
            baseline_start,
            baseline_end,
            aggregate: Aggregate::Median,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.window_len < 1 || self.shift < 1 {
            return Err(Error::config("window length and shift must be at least one day"));
        }
        if self.baseline_end < self.baseline_start {
            return Err(Error::config("baseline period is empty"));
        }
        Ok(())
    }

    /// Half-open day range `[t - len/2, t - len/2 + len)` of the window centred at `t`.
    pub fn window(&self, center: NaiveDate) -> (NaiveDate, NaiveDate) {
        let lo = center - Duration::days(self.window_len / 2);
        (lo, lo + Duration::days(self.window_len))
    }
}

pub fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    Some(if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    })
}

/// `100 * (v - b) / b` with `b` the baseline median for the same weekday.
/// Days with `b = 0` or no value are missing. Every weekday needs at least one
/// baseline observation.
pub fn percent_change(series: &DailySeries, baseline: (NaiveDate, NaiveDate)) -> Result<DailySeries> {
    let mut by_weekday: [Vec<f64>; 7] = Default::default();
    for (d, v) in series.values.range(baseline.0..=baseline.1) {
        if let Some(v) = v {
            by_weekday[weekday_index(*d)].push(*v);
        }
    }
    let mut base = [0.0; 7];
    for (w, vals) in by_weekday.iter_mut().enumerate() {
        base[w] = median(vals).ok_or_else(|| {
            Error::invalid(format!(
                "series {}/{}: no baseline value for weekday {w}",
                series.key.metric,
                series.key.category.as_deref().unwrap_or("")
            ))
        })?;
    }
    let mut out = DailySeries::new(SeriesKey {
        metric: format!("{}_pct_change", series.key.metric),
        ..series.key.clone()
    });
    for (d, v) in &series.values {
        let b = base[weekday_index(*d)];
        let p = v.and_then(|v| (b != 0.0).then(|| 100.0 * (v - b) / b));
        out.values.insert(*d, p);
    }
    Ok(out)
}

/// Centred 7-day mean over the defined values in each window.
pub fn rolling_mean(series: &DailySeries) -> DailySeries {
    let mut out = DailySeries::new(series.key.clone());
    for d in series.values.keys() {
        let vals: Vec<f64> = series
            .values
            .range(*d - Duration::days(3)..=*d + Duration::days(3))
            .filter_map(|(_, v)| *v)
            .collect();
        let m = (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64);
        out.values.insert(*d, m);
    }
    out
}

/// Percent change of the across-user aggregate of a per-user window metric.
///
/// For each window centre `t` in `[start, end]` (stepping by `shift`),
/// `metric(user, lo, hi)` is evaluated on the half-open window and the
/// values combined across users (median by default). The baseline is the median of these values
/// over centres inside the baseline period.
pub fn rolling_change<U, F>(
    key: SeriesKey,
    users: &[U],
    metric: F,
    cfg: &WindowConfig,
    start: NaiveDate,
    end: NaiveDate,
) -> Result<(DailySeries, DailySeries)>
where
    U: Sync,
    F: Fn(&U, NaiveDate, NaiveDate) -> Option<f64> + Sync,
{
    use rayon::prelude::*;
    cfg.validate()?;
    let first = start.min(cfg.baseline_start);
    let centers: Vec<NaiveDate> = dates(first, end).step_by(cfg.shift as usize).collect();
    let values: Vec<Option<f64>> = centers
        .par_iter()
        .map(|&t| {
            let (lo, hi) = cfg.window(t);
            let mut v: Vec<f64> = users.iter().filter_map(|u| metric(u, lo, hi)).collect();
            cfg.aggregate.apply(&mut v)
        })
        .collect();
    let mut level = DailySeries::new(key.clone());
    for (t, v) in centers.iter().zip(&values) {
        level.values.insert(*t, *v);
    }
    let mut base: Vec<f64> = level
        .values
        .range(cfg.baseline_start..=cfg.baseline_end)
        .filter_map(|(_, v)| *v)
        .collect();
    let b = median(&mut base).ok_or_else(|| Error::invalid("no baseline window has data"))?;
    let mut change = DailySeries::new(SeriesKey {
        metric: format!("{}_pct_change", key.metric),
        ..key
    });
    for (t, v) in &level.values {
        if *t >= start {
            change
                .values
                .insert(*t, v.and_then(|v| (b != 0.0).then(|| 100.0 * (v - b) / b)));
        }
    }
    level.values.retain(|t, _| *t >= start);
    Ok((level, change))
}

/// Daily visit counts and median visit durations (minutes) per first-level
/// POI category, with Shop & Service additionally split into essential and
/// non-essential shops. Days without visits count zero and have no duration.
pub fn daily_visit_series(
    visits: &[Visit],
    taxonomy: &Taxonomy,
    cohort: &str,
    start: NaiveDate,
    end: NaiveDate,
) -> Vec<DailySeries> {
    let mut per: BTreeMap<String, BTreeMap<NaiveDate, Vec<f64>>> = BTreeMap::new();
    for v in visits.iter().filter(|v| v.day >= start && v.day <= end) {
        let SemanticLabel::Poi(p) = &v.label else { continue };
        let minutes = v.duration() as f64 / 60.0;
        per.entry(p.l1.clone()).or_default().entry(v.day).or_default().push(minutes);
        if p.l1 == "Shop & Service" {
            let split = if taxonomy.is_essential_shop(&p.l1, &p.l2) {
                "Shop & Service (essential)"
            } else {
                "Shop & Service (non-essential)"
            };
            per.entry(split.to_string()).or_default().entry(v.day).or_default().push(minutes);
        }
    }
    let mut out = Vec::new();
    for (cat, days) in per {
        let mut counts = DailySeries::new(SeriesKey::new(cohort, "visits", Some(&cat)));
        let mut durations = DailySeries::new(SeriesKey::new(cohort, "visit_duration", Some(&cat)));
        for d in dates(start, end) {
            let mut v = days.get(&d).cloned().unwrap_or_default();
            counts.values.insert(d, Some(v.len() as f64));
            durations.values.insert(d, median(&mut v));
        }
        out.push(counts);
        out.push(durations);
    }
    out
}

/// Writes `date,cohort,metric,category,value`; missing values are empty.
pub fn write_tidy_csv<'a>(w: impl Write, series: impl IntoIterator<Item = &'a DailySeries>) -> Result<()> {
    let mut csv = csv::Writer::from_writer(w);
    csv.write_record(["date", "cohort", "metric", "category", "value"])?;
    for s in series {
        for (d, v) in &s.values {
            csv.write_record([
                d.to_string(),
                s.key.cohort.clone(),
                s.key.metric.clone(),
                s.key.category.clone().unwrap_or_default(),
                v.map(|v| format!("{v}")).unwrap_or_default(),
            ])?;
        }
    }
    csv.flush()?;
    Ok(())
}
