//! Adaptive random-walk Metropolis with multiple chains.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Log density known up to a constant.
pub trait LogDensity: Sync {
    fn dim(&self) -> usize;
    fn log_density(&self, x: &[f64]) -> f64;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerConfig {
    pub chains: usize,
    pub warmup: usize,
    /// Kept draws per chain.
    pub draws: usize,
    /// Iterations per kept draw.
    pub thin: usize,
    pub target_accept: f64,
    /// Scale of the initial spread around the starting point, relative to
    /// the initial proposal covariance.
    pub init_spread: f64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            chains: 4,
            warmup: 40000,
            draws: 5000,
            thin: 20,
            target_accept: 0.3,
            init_spread: 1.0,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.chains < 2 {
            return Err(Error::config("at least two chains are required"));
        }
        if self.draws == 0 || self.thin == 0 {
            return Err(Error::config("draws and thin must be positive"));
        }
        if !(self.target_accept > 0.0 && self.target_accept < 1.0) {
            return Err(Error::config("target acceptance must lie in (0, 1)"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Chain {
    /// Kept draws, one vector per draw.
    pub draws: Vec<Vec<f64>>,
    /// Acceptance rate after warmup.
    pub acceptance: f64,
    pub scale: f64,
}

fn cholesky_or_diag(cov: &DMatrix<f64>) -> DMatrix<f64> {
    let d = cov.nrows();
    let mut c = cov.clone();
    for attempt in 0..8 {
        if let Some(ch) = c.clone().cholesky() {
            return ch.l();
        }
        let ridge = 1e-10 * 10f64.powi(attempt * 2) * (cov.trace() / d as f64).max(1e-12);
        c = cov + DMatrix::identity(d, d) * ridge;
    }
    DMatrix::from_diagonal(&DVector::from_iterator(d, (0..d).map(|i| cov[(i, i)].abs().max(1e-12).sqrt())))
}

fn run_chain<T: LogDensity>(target: &T, start: &[f64], cov0: &DMatrix<f64>, cfg: &SamplerConfig, seed: u64) -> Result<Chain> {
    let d = target.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = |rng: &mut ChaCha8Rng| DVector::from_iterator(d, (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)));

    let mut l = cholesky_or_diag(cov0);
    let mut x = DVector::from_column_slice(start) + &l * normal(&mut rng) * cfg.init_spread;
    let mut lp = target.log_density(x.as_slice());
    if !lp.is_finite() {
        x = DVector::from_column_slice(start);
        lp = target.log_density(x.as_slice());
    }
    if !lp.is_finite() {
        return Err(Error::Sampler("log density is not finite at the initial point".into()));
    }

    let mut log_scale = (2.38 / (d as f64).sqrt()).ln();
    // Running mean and scatter of the warmup draws after an initial burn-in.
    let burn = cfg.warmup / 5;
    let refresh = (cfg.warmup / 20).max(50);
    let mut mean = DVector::<f64>::zeros(d);
    let mut scatter = DMatrix::<f64>::zeros(d, d);
    let mut n_seen = 0usize;
    let mut rm_t = 0usize;
    let step = |x: &mut DVector<f64>, lp: &mut f64, l: &DMatrix<f64>, scale: f64, rng: &mut ChaCha8Rng| -> bool {
        let prop = &*x + l * normal(rng) * scale;
        let lq = target.log_density(prop.as_slice());
        let accept = lq.is_finite() && (lq - *lp >= 0.0 || rng.gen::<f64>().ln() < lq - *lp);
        if accept {
            *x = prop;
            *lp = lq;
        }
        accept
    };

    for it in 0..cfg.warmup {
        let acc = step(&mut x, &mut lp, &l, log_scale.exp(), &mut rng);
        // Robbins-Monro update of the global proposal scale.
        rm_t += 1;
        let rate = 1.0 / (rm_t as f64).powf(0.6);
        log_scale += rate * (if acc { 1.0 } else { 0.0 } - cfg.target_accept);
        if it >= burn {
            n_seen += 1;
            let delta = &x - &mean;
            mean += &delta / n_seen as f64;
            scatter += &delta * (&x - &mean).transpose();
            if n_seen % refresh == 0 && n_seen > 2 * d {
                let cov = &scatter / (n_seen - 1) as f64 * 0.95 + cov0 * 0.05;
                l = cholesky_or_diag(&cov);
                rm_t = (rm_t / 4).max(1);
            }
        }
    }

    let scale = log_scale.exp();
    let mut draws = Vec::with_capacity(cfg.draws);
    let mut accepted = 0usize;
    for _ in 0..cfg.draws {
        for _ in 0..cfg.thin {
            accepted += step(&mut x, &mut lp, &l, scale, &mut rng) as usize;
        }
        draws.push(x.as_slice().to_vec());
    }
    Ok(Chain {
        draws,
        acceptance: accepted as f64 / (cfg.draws * cfg.thin) as f64,
        scale,
    })
}

/// Runs `cfg.chains` independent chains in parallel, each seeded from
/// `seed` and its index. Chains start dispersed around `start` with spread
/// given by `cov`, which also seeds the proposal covariance.
pub fn sample<T: LogDensity>(target: &T, start: &[f64], cov: &DMatrix<f64>, cfg: &SamplerConfig, seed: u64) -> Result<Vec<Chain>> {
    cfg.validate()?;
    if start.len() != target.dim() || cov.nrows() != target.dim() {
        return Err(Error::Sampler("dimension mismatch between start, covariance and target".into()));
    }
    (0..cfg.chains)
        .into_par_iter()
        .map(|c| run_chain(target, start, cov, cfg, seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(c as u64)))
        .collect()
}
