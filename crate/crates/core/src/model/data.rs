use std::collections::BTreeMap;

use chrono::{Datelike, Duration, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::clock::weekday_index;
use crate::{Error, Result};

/// One state-day of model input before standardisation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelInputRow {
    pub state: String,
    pub date: NaiveDate,
    #[serde(alias = "Y_raw")]
    pub y_raw: f64,
    pub stringency: f64,
    pub deaths_per_100k: f64,
    pub tmax_c: f64,
    pub precip_mm: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Baseline,
    Weather,
    Full,
    CumulatedStringency,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::Baseline, Variant::Weather, Variant::Full, Variant::CumulatedStringency];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Baseline => "baseline",
            Variant::Weather => "weather",
            Variant::Full => "full",
            Variant::CumulatedStringency => "cumulated_stringency",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::config(format!("unknown model variant {s:?}")))
    }

    pub fn has_weather(self) -> bool {
        self != Variant::Baseline
    }

    pub fn has_adaptation(self) -> bool {
        matches!(self, Variant::Full | Variant::CumulatedStringency)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    #[default]
    MeanVisits,
    TimeNotHome,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub variant: Variant,
    pub target: Outcome,
}

/// One fitted observation with standardised covariates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub state: usize,
    pub date: NaiveDate,
    pub weekday: usize,
    pub y: f64,
    pub stringency: f64,
    /// Death ratio of the previous day.
    pub deaths: f64,
    pub temperature: f64,
    pub precipitation: f64,
    /// Day of year.
    pub day: f64,
    /// Cumulative raw stringency up to this day, in units of 100.
    pub cumulative_stringency: f64,
}

impl Observation {
    /// Sigmoid argument for the given variant.
    pub fn adaptation_x(&self, variant: Variant) -> f64 {
        match variant {
            Variant::CumulatedStringency => self.cumulative_stringency,
            _ => self.day,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub mean: f64,
    pub sd: f64,
}

impl Standardization {
    fn of(values: impl Iterator<Item = f64> + Clone) -> Self {
        let n = values.clone().count().max(1) as f64;
        let mean = values.clone().sum::<f64>() / n;
        let var = values.map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        let sd = if var > 0.0 { var.sqrt() } else { 1.0 };
        Standardization { mean, sd }
    }

    pub fn apply(&self, v: f64) -> f64 {
        (v - self.mean) / self.sd
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelData {
    pub states: Vec<String>,
    pub rows: Vec<Observation>,
    /// Standardisations of y (if applied), stringency, deaths, temperature, precipitation.
    pub scales: BTreeMap<String, Standardization>,
}

impl ModelData {
    pub fn n_states(&self) -> usize {
        self.states.len()
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Identifies the fitted rows, for checking that models are comparable.
    pub fn row_keys(&self) -> Vec<(usize, NaiveDate)> {
        self.rows.iter().map(|r| (r.state, r.date)).collect()
    }

    /// Builds fitted rows from raw input. Each state's rows are sorted by date;
    /// a row is kept only when the previous calendar day is present, since it
    /// supplies the lagged death ratio. Covariates are z-scored over the kept
    /// rows, and so is `y` when `standardize_y` is set.
    pub fn prepare(input: &[ModelInputRow], standardize_y: bool) -> Result<Self> {
        let mut by_state: BTreeMap<&str, Vec<&ModelInputRow>> = BTreeMap::new();
        for r in input {
            for v in [r.y_raw, r.stringency, r.deaths_per_100k, r.tmax_c, r.precip_mm] {
                if !v.is_finite() {
                    return Err(Error::invalid(format!("non-finite value for {} on {}", r.state, r.date)));
                }
            }
            by_state.entry(&r.state).or_default().push(r);
        }
        let states: Vec<String> = by_state.keys().map(|s| s.to_string()).collect();
        let mut rows = Vec::new();
        for (si, (_, mut rs)) in by_state.into_iter().enumerate() {
            rs.sort_by_key(|r| r.date);
            if rs.windows(2).any(|w| w[0].date == w[1].date) {
                return Err(Error::invalid(format!("duplicate date for state {}", states[si])));
            }
            let mut cumulative = 0.0;
            for (i, r) in rs.iter().enumerate() {
                cumulative += r.stringency / 100.0;
                let Some(prev) = i.checked_sub(1).map(|j| rs[j]) else { continue };
                if prev.date != r.date - Duration::days(1) {
                    continue;
                }
                rows.push(Observation {
                    state: si,
                    date: r.date,
                    weekday: weekday_index(r.date),
                    y: r.y_raw,
                    stringency: r.stringency,
                    deaths: prev.deaths_per_100k,
                    temperature: r.tmax_c,
                    precipitation: r.precip_mm,
                    day: r.date.ordinal() as f64,
                    cumulative_stringency: cumulative,
                });
            }
        }
        if rows.is_empty() {
            return Err(Error::invalid("no model rows with a previous day available"));
        }
        let mut scales = BTreeMap::new();
        macro_rules! standardize {
            ($name:literal, $field:ident) => {{
                let s = Standardization::of(rows.iter().map(|r| r.$field));
                rows.iter_mut().for_each(|r| r.$field = s.apply(r.$field));
                scales.insert($name.to_string(), s);
            }};
        }
        standardize!("stringency", stringency);
        standardize!("deaths", deaths);
        standardize!("temperature", temperature);
        standardize!("precipitation", precipitation);
        if standardize_y {
            standardize!("y", y);
        }
        Ok(ModelData { states, rows, scales })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(state: &str, day: u32, s: f64, deaths: f64) -> ModelInputRow {
        ModelInputRow {
            state: state.into(),
            date: NaiveDate::from_ymd_opt(2020, 3, day).unwrap(),
            y_raw: day as f64,
            stringency: s,
            deaths_per_100k: deaths,
            tmax_c: day as f64,
            precip_mm: (day % 3) as f64,
        }
    }

    #[test]
    fn lag_and_first_day_dropped() {
        let input = vec![row("A", 2, 10.0, 5.0), row("A", 1, 0.0, 1.0), row("A", 3, 20.0, 9.0), row("A", 5, 20.0, 9.0)];
        let d = ModelData::prepare(&input, false).unwrap();
        assert_eq!(d.len(), 2);
        assert_eq!(d.rows[0].date, NaiveDate::from_ymd_opt(2020, 3, 2).unwrap());
        let s = d.scales["deaths"];
        assert_eq!(d.rows[0].deaths * s.sd + s.mean, 1.0);
        assert_eq!(d.rows[1].deaths * s.sd + s.mean, 5.0);
        assert!((d.rows[1].cumulative_stringency - 0.3).abs() < 1e-12);
        assert_eq!(d.rows[0].y, 2.0);
    }

    #[test]
    fn covariates_are_standardized() {
        let input: Vec<_> = (1..=20).map(|k| row("A", k, k as f64 * 3.0, k as f64)).collect();
        let d = ModelData::prepare(&input, true).unwrap();
        let n = d.len() as f64;
        let mean: f64 = d.rows.iter().map(|r| r.stringency).sum::<f64>() / n;
        let var: f64 = d.rows.iter().map(|r| r.stringency.powi(2)).sum::<f64>() / n;
        assert!(mean.abs() < 1e-12 && (var - 1.0).abs() < 1e-12);
        assert!(d.rows.iter().map(|r| r.y).sum::<f64>().abs() < 1e-9);
    }
}
