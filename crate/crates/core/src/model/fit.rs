use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::data::{ModelData, Variant};
use super::density::{predict_mean, Params, Posterior, GAMMA_SHIFT, PHI_SHIFT};
use super::diagnostics::{effective_sample_size, split_rhat};
use super::optimize::{laplace_covariance, maximize};
use super::psis::{psis_loo, LooResult};
use super::sampler::{sample, LogDensity, SamplerConfig};
use crate::{Error, Result};

pub const RHAT_WARN: f64 = 1.1;

impl LogDensity for Posterior<'_> {
    fn dim(&self) -> usize {
        self.layout.dim()
    }

    fn log_density(&self, x: &[f64]) -> f64 {
        Posterior::log_density(self, x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    pub sampler: SamplerConfig,
    /// Keep the pointwise log-likelihood matrix and compute PSIS-LOO.
    pub loo: bool,
    pub max_mode_iters: u64,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            sampler: SamplerConfig::default(),
            loo: true,
            max_mode_iters: 500,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSummary {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
    pub q025: f64,
    pub q975: f64,
    pub rhat: f64,
    pub ess: f64,
}

impl ParamSummary {
    pub fn covers(&self, v: f64) -> bool {
        self.q025 <= v && v <= self.q975
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct R2Summary {
    pub mean: f64,
    pub sd: f64,
}

/// Posterior draws and derived quantities of one fitted variant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFit {
    pub variant: Variant,
    pub names: Vec<String>,
    /// Natural-scale draws, chains concatenated in order.
    pub draws: Vec<Vec<f64>>,
    pub chains: usize,
    pub summary: Vec<ParamSummary>,
    /// Pointwise log-likelihood, `log_lik[observation][draw]`.
    pub log_lik: Vec<Vec<f64>>,
    pub loo: Option<LooResult>,
    pub r2: R2Summary,
    pub acceptance: Vec<f64>,
    pub warnings: Vec<String>,
    pub data_fingerprint: String,
}

impl ModelFit {
    pub fn param(&self, name: &str) -> Option<&ParamSummary> {
        self.summary.iter().find(|s| s.name == name)
    }
}

/// Identifies the fitted rows and outcomes.
pub fn fingerprint(data: &ModelData) -> String {
    let mut h = Sha256::new();
    for r in &data.rows {
        h.update((r.state as u64).to_le_bytes());
        h.update(r.date.to_string().as_bytes());
        h.update(r.y.to_bits().to_le_bytes());
    }
    hex::encode(h.finalize())
}

fn start_points(data: &ModelData, post: &Posterior) -> Vec<Vec<f64>> {
    let s = data.n_states();
    let mut alpha = vec![0.0; s];
    let mut counts = vec![0usize; s];
    for r in &data.rows {
        alpha[r.state] += r.y;
        counts[r.state] += 1;
    }
    alpha.iter_mut().zip(&counts).for_each(|(a, c)| *a /= (*c).max(1) as f64);
    let n = data.len().max(1) as f64;
    let my = data.rows.iter().map(|r| r.y).sum::<f64>() / n;
    let sd = (data.rows.iter().map(|r| (r.y - my).powi(2)).sum::<f64>() / n).sqrt();
    let base = Params {
        alpha,
        beta_policy: 0.0,
        beta_deaths: 0.0,
        beta_temp: 0.0,
        beta_prec: 0.0,
        beta_adapt: 0.05,
        gamma: vec![GAMMA_SHIFT + 0.1; s],
        phi: vec![PHI_SHIFT + 10.0; s],
        rho: [0.0; 7],
        sigma: (0.5 * sd).clamp(0.01, 1.0),
    };
    if !post.layout.variant.has_adaptation() {
        return vec![post.layout.unconstrain(&base)];
    }
    let mut out = Vec::new();
    for phi in [2.0, 10.0, 25.0] {
        for gamma in [0.05, 0.2] {
            let p = Params {
                gamma: vec![GAMMA_SHIFT + gamma; s],
                phi: vec![PHI_SHIFT + phi; s],
                ..base.clone()
            };
            out.push(post.layout.unconstrain(&p));
        }
    }
    out
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Per-draw variance of predictions over variance of predictions plus
/// residuals. Constant predictions give 0.
pub fn bayesian_r2(y: &[f64], predictions: &[Vec<f64>]) -> Vec<f64> {
    let var = |v: &[f64]| {
        let m = v.iter().sum::<f64>() / v.len() as f64;
        v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / v.len() as f64
    };
    predictions
        .iter()
        .map(|pred| {
            let res: Vec<f64> = y.iter().zip(pred).map(|(a, b)| a - b).collect();
            let (vp, vr) = (var(pred), var(&res));
            if vp <= 0.0 {
                0.0
            } else {
                vp / (vp + vr)
            }
        })
        .collect()
}

/// Mode search, Laplace initialisation and adaptive Metropolis sampling of
/// one model variant, followed by diagnostics, Bayesian R² and PSIS-LOO.
pub fn fit_model(data: &ModelData, variant: Variant, cfg: &FitConfig, seed: u64) -> Result<ModelFit> {
    if data.is_empty() {
        return Err(Error::invalid("cannot fit a model without observations"));
    }
    let post = Posterior::new(data, variant);
    let layout = &post.layout;
    let mut best: Option<(Vec<f64>, f64)> = None;
    for start in start_points(data, &post) {
        if let Ok((x, v)) = maximize(&post, start, cfg.max_mode_iters) {
            if v.is_finite() && best.as_ref().map_or(true, |b| v > b.1) {
                best = Some((x, v));
            }
        }
    }
    let (mode, _) = best.ok_or_else(|| Error::Sampler("no finite posterior mode found".into()))?;
    let cov = laplace_covariance(&post, &mode);
    let chains = sample(&post, &mode, &cov, &cfg.sampler, seed)?;

    let unconstrained: Vec<&Vec<f64>> = chains.iter().flat_map(|c| c.draws.iter()).collect();
    let params: Vec<Params> = unconstrained.par_iter().map(|x| layout.constrain(x)).collect();
    let draws: Vec<Vec<f64>> = params.iter().map(|p| layout.natural(p)).collect();
    let names = layout.names(&data.states);
    let per_chain = cfg.sampler.draws;

    let mut warnings = Vec::new();
    let summary: Vec<ParamSummary> = names
        .iter()
        .enumerate()
        .map(|(j, name)| {
            let by_chain: Vec<Vec<f64>> = draws.chunks(per_chain).map(|c| c.iter().map(|d| d[j]).collect()).collect();
            let mut all: Vec<f64> = draws.iter().map(|d| d[j]).collect();
            let n = all.len() as f64;
            let mean = all.iter().sum::<f64>() / n;
            let sd = (all.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
            all.sort_by(f64::total_cmp);
            ParamSummary {
                name: name.clone(),
                mean,
                sd,
                q025: quantile(&all, 0.025),
                q975: quantile(&all, 0.975),
                rhat: split_rhat(&by_chain),
                ess: effective_sample_size(&by_chain),
            }
        })
        .collect();
    for s in summary.iter().filter(|s| s.rhat > RHAT_WARN) {
        warnings.push(format!("split R-hat {:.3} for {}", s.rhat, s.name));
    }

    let y: Vec<f64> = data.rows.iter().map(|r| r.y).collect();
    let predictions: Vec<Vec<f64>> = params
        .par_iter()
        .map(|p| data.rows.iter().map(|r| predict_mean(p, r, variant)).collect())
        .collect();
    let r2_draws = bayesian_r2(&y, &predictions);
    drop(predictions);
    let m = r2_draws.iter().sum::<f64>() / r2_draws.len() as f64;
    let r2 = R2Summary {
        mean: m,
        sd: (r2_draws.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (r2_draws.len() as f64 - 1.0).max(1.0)).sqrt(),
    };

    let (log_lik, loo) = if cfg.loo {
        let by_draw: Vec<Vec<f64>> = unconstrained.par_iter().map(|x| post.pointwise(x)).collect();
        let log_lik: Vec<Vec<f64>> = (0..data.len())
            .into_par_iter()
            .map(|i| by_draw.iter().map(|d| d[i]).collect())
            .collect();
        let loo = psis_loo(&log_lik)?;
        let bad = loo.pareto_k.iter().filter(|k| **k > super::psis::PARETO_K_WARN).count();
        if bad > 0 {
            warnings.push(format!("Pareto k above 0.7 for {bad} observations"));
        }
        (log_lik, Some(loo))
    } else {
        (Vec::new(), None)
    };

    Ok(ModelFit {
        variant,
        names,
        chains: chains.len(),
        acceptance: chains.iter().map(|c| c.acceptance).collect(),
        draws,
        summary,
        log_lik,
        loo,
        r2,
        warnings,
        data_fingerprint: fingerprint(data),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub variant: Variant,
    pub loo: f64,
    pub se: f64,
    pub r2: f64,
    pub r2_sd: f64,
    pub weight: f64,
}

/// Ranks fits by PSIS-LOO with pseudo-BMA weights `exp(loo - max)`
/// normalised to one. All fits must use the same rows.
pub fn compare_models(fits: &[&ModelFit]) -> Result<Vec<ComparisonRow>> {
    let first = fits.first().ok_or_else(|| Error::invalid("no models to compare"))?;
    let mut rows = Vec::new();
    for f in fits {
        if f.data_fingerprint != first.data_fingerprint {
            return Err(Error::invalid("models were fitted on different rows"));
        }
        let loo = f.loo.as_ref().ok_or_else(|| Error::invalid("model fitted without PSIS-LOO"))?;
        rows.push(ComparisonRow {
            variant: f.variant,
            loo: loo.loo,
            se: loo.se,
            r2: f.r2.mean,
            r2_sd: f.r2.sd,
            weight: 0.0,
        });
    }
    let max = rows.iter().map(|r| r.loo).fold(f64::NEG_INFINITY, f64::max);
    let total: f64 = rows.iter().map(|r| (r.loo - max).exp()).sum();
    rows.iter_mut().for_each(|r| r.weight = (r.loo - max).exp() / total);
    rows.sort_by(|a, b| b.loo.total_cmp(&a.loo));
    Ok(rows)
}
