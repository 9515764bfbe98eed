use chrono::{Datelike, Duration, NaiveDate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal, StudentT};
use serde::{Deserialize, Serialize};

use crate::model::{predict_mean, ModelData, ModelInputRow, Params, Variant};
use crate::{Error, Result};

/// Generator settings for state-level model input drawn from the model
/// itself with known coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelSynthConfig {
    pub states: usize,
    pub days: usize,
    pub start: NaiveDate,
    pub beta_policy: f64,
    pub beta_deaths: f64,
    pub beta_temp: f64,
    pub beta_prec: f64,
    pub beta_adapt: f64,
    pub sigma: f64,
    /// Sigmoid argument used to generate the outcome.
    pub variant: Variant,
}

impl Default for ModelSynthConfig {
    fn default() -> Self {
        ModelSynthConfig {
            states: 4,
            days: 210,
            start: NaiveDate::from_ymd_opt(2020, 2, 1).expect("valid date"),
            beta_policy: -0.242,
            beta_deaths: -0.040,
            beta_temp: 0.0,
            beta_prec: 0.0,
            beta_adapt: 0.118,
            sigma: 0.05,
            variant: Variant::Full,
        }
    }
}

/// Raw input rows plus the parameters that generated them. The outcome is
/// produced on the standardised covariates that [`ModelData::prepare`]
/// computes, so a fit with `standardize_y = false` targets `truth` directly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthModelData {
    pub rows: Vec<ModelInputRow>,
    pub truth: Params,
}

pub fn synth_model_data(cfg: &ModelSynthConfig, seed: u64) -> Result<SynthModelData> {
    if cfg.states == 0 || cfg.days < 3 {
        return Err(Error::config("need at least one state and three days"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let jitter = Normal::new(0.0, 1.0).expect("valid normal");
    let rain = Exp::new(1.0 / 6.0).expect("valid rate");
    let mut rows = Vec::with_capacity(cfg.states * cfg.days);
    for k in 0..cfg.states {
        let kf = k as f64;
        let onset = 68.0 + 4.0 * kf + rng.gen_range(-2.0..2.0);
        let peak_s = 65.0 + 6.0 * kf + rng.gen_range(0.0..8.0);
        let reopen = 125.0 + 8.0 * kf + rng.gen_range(-5.0..5.0);
        let death_peak = 100.0 + 10.0 * kf + rng.gen_range(-5.0..5.0);
        let death_amp = 0.4 + 0.25 * kf;
        let second_wave = 190.0 + 6.0 * kf;
        let temp_offset = -4.0 + 3.0 * kf;
        for i in 0..cfg.days {
            let date = cfg.start + Duration::days(i as i64);
            let d = date.ordinal() as f64;
            let mut s = if d < onset {
                2.0 * (d - 30.0).max(0.0) / (onset - 30.0)
            } else if d < onset + 10.0 {
                peak_s * (d - onset) / 10.0
            } else if d < reopen {
                peak_s
            } else {
                (peak_s - 0.25 * (d - reopen)).max(35.0)
            };
            s = (s + 3.0 * jitter.sample(&mut rng)).clamp(0.0, 100.0);
            let wave = death_amp * (-((d - death_peak) / 18.0).powi(2)).exp()
                + 0.6 * death_amp * (-((d - second_wave) / 20.0).powi(2)).exp();
            let deaths = (wave * (0.25 * jitter.sample(&mut rng)).exp()).max(0.0);
            let tmax = 14.0 + temp_offset + 14.0 * (2.0 * std::f64::consts::PI * (d - 105.0) / 365.0).sin()
                + 3.0 * jitter.sample(&mut rng);
            let precip = if rng.gen_bool(0.35) { rain.sample(&mut rng) } else { 0.0 };
            rows.push(ModelInputRow {
                state: format!("S{k}"),
                date,
                y_raw: 0.0,
                stringency: s,
                deaths_per_100k: deaths,
                tmax_c: tmax,
                precip_mm: precip,
            });
        }
    }

    let truth = Params {
        alpha: (0..cfg.states).map(|_| rng.gen_range(-0.3..0.3)).collect(),
        beta_policy: cfg.beta_policy,
        beta_deaths: cfg.beta_deaths,
        beta_temp: cfg.beta_temp,
        beta_prec: cfg.beta_prec,
        beta_adapt: cfg.beta_adapt,
        gamma: (0..cfg.states).map(|_| rng.gen_range(0.08..0.15)).collect(),
        phi: (0..cfg.states).map(|_| rng.gen_range(95.0..110.0)).collect(),
        rho: [0.02, 0.01, 0.0, 0.01, 0.03, -0.03, -0.04],
        sigma: cfg.sigma,
    };
    let data = ModelData::prepare(&rows, false)?;
    let noise = StudentT::new(3.0).expect("valid dof");
    let state_names: Vec<String> = data.states.clone();
    let mut y = std::collections::HashMap::new();
    for obs in &data.rows {
        let v = predict_mean(&truth, obs, cfg.variant) + cfg.sigma * noise.sample(&mut rng);
        y.insert((state_names[obs.state].clone(), obs.date), v);
    }
    for r in rows.iter_mut() {
        r.y_raw = y.get(&(r.state.clone(), r.date)).copied().unwrap_or(0.0);
    }
    Ok(SynthModelData { rows, truth })
}
