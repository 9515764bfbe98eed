//! Pareto-smoothed importance sampling leave-one-out cross-validation.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Pareto shape above which the importance weights are unreliable.
pub const PARETO_K_WARN: f64 = 0.7;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LooResult {
    /// Sum of pointwise expected log predictive densities.
    pub loo: f64,
    pub se: f64,
    pub pointwise: Vec<f64>,
    pub pareto_k: Vec<f64>,
    pub warning: bool,
}

fn logsumexp(x: &[f64]) -> f64 {
    let m = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + x.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

/// Zhang-Stephens estimate of generalized Pareto shape and scale from
/// ascending exceedances, with weak prior regularisation of the shape.
pub fn gpd_fit(x: &[f64]) -> (f64, f64) {
    const PRIOR_BS: f64 = 3.0;
    const PRIOR_K: f64 = 10.0;
    let n = x.len();
    let m = 30 + (n as f64).sqrt() as usize;
    let quart = x[((n as f64) / 4.0 + 0.5) as usize - 1];
    let last = x[n - 1];
    let mut b: Vec<f64> = (1..=m)
        .map(|j| (1.0 - (m as f64 / (j as f64 - 0.5)).sqrt()) / (PRIOR_BS * quart) + 1.0 / last)
        .collect();
    let k_of = |b: f64| x.iter().map(|v| (-b * v).ln_1p()).sum::<f64>() / n as f64;
    let len_scale: Vec<f64> = b
        .iter()
        .map(|&bj| {
            let k = k_of(bj);
            n as f64 * ((-bj / k).ln() - k - 1.0)
        })
        .collect();
    let mut w: Vec<f64> = len_scale
        .iter()
        .map(|li| 1.0 / len_scale.iter().map(|lj| (lj - li).exp()).sum::<f64>())
        .collect();
    let keep: Vec<bool> = w.iter().map(|wi| *wi >= 10.0 * f64::EPSILON).collect();
    let mut i = 0;
    b.retain(|_| {
        i += 1;
        keep[i - 1]
    });
    w.retain(|wi| *wi >= 10.0 * f64::EPSILON);
    let total: f64 = w.iter().sum();
    let b_post: f64 = b.iter().zip(&w).map(|(bj, wj)| bj * wj / total).sum();
    let k = k_of(b_post);
    let sigma = -k / b_post;
    ((n as f64 * k + PRIOR_K * 0.5) / (n as f64 + PRIOR_K), sigma)
}

fn gpd_quantile(p: f64, k: f64, sigma: f64) -> f64 {
    if k.abs() < f64::EPSILON {
        -sigma * (-p).ln_1p()
    } else {
        sigma * (-k * (-p).ln_1p()).exp_m1() / k
    }
}

/// Smoothed, normalised log importance weights from raw log ratios, and the
/// estimated Pareto shape.
pub fn psis_log_weights(log_ratios: &[f64]) -> (Vec<f64>, f64) {
    let s = log_ratios.len();
    let max = log_ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut x: Vec<f64> = log_ratios.iter().map(|v| v - max).collect();
    let m = (0.2 * s as f64).min(3.0 * (s as f64).sqrt()).ceil() as usize;
    let mut order: Vec<usize> = (0..s).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let cutoff = x[order[s.saturating_sub(m + 1)]].max(f64::MIN_POSITIVE.ln());
    let mut tail: Vec<usize> = (0..s).filter(|&i| x[i] > cutoff).collect();
    let k = if tail.len() <= 4 {
        f64::INFINITY
    } else {
        tail.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
        let exp_cut = cutoff.exp();
        let vals: Vec<f64> = tail.iter().map(|&i| x[i].exp() - exp_cut).collect();
        let (k, sigma) = gpd_fit(&vals);
        if k.is_finite() && sigma > 0.0 {
            let n = tail.len() as f64;
            for (r, &i) in tail.iter().enumerate() {
                let p = (r as f64 + 0.5) / n;
                x[i] = (gpd_quantile(p, k, sigma) + exp_cut).ln();
            }
            x.iter_mut().filter(|v| **v > 0.0).for_each(|v| *v = 0.0);
        }
        k
    };
    let norm = logsumexp(&x);
    x.iter_mut().for_each(|v| *v -= norm);
    (x, k)
}

/// PSIS-LOO from a pointwise log-likelihood matrix stored observation-major
/// (`log_lik[i][s]` for observation `i`, draw `s`).
pub fn psis_loo(log_lik: &[Vec<f64>]) -> Result<LooResult> {
    if log_lik.is_empty() {
        return Err(Error::invalid("PSIS-LOO needs at least one observation"));
    }
    let s = log_lik[0].len();
    if s < 2 || log_lik.iter().any(|r| r.len() != s) {
        return Err(Error::invalid("log-likelihood rows must share a draw count of at least two"));
    }
    if log_lik.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::invalid("log-likelihood matrix has non-finite entries"));
    }
    let per: Vec<(f64, f64)> = log_lik
        .par_iter()
        .map(|ll| {
            let neg: Vec<f64> = ll.iter().map(|v| -v).collect();
            let (lw, k) = psis_log_weights(&neg);
            let terms: Vec<f64> = lw.iter().zip(ll).map(|(w, l)| w + l).collect();
            (logsumexp(&terms), k)
        })
        .collect();
    let pointwise: Vec<f64> = per.iter().map(|p| p.0).collect();
    let pareto_k: Vec<f64> = per.iter().map(|p| p.1).collect();
    let n = pointwise.len() as f64;
    let loo = pointwise.iter().sum::<f64>();
    let mean = loo / n;
    let var = pointwise.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    Ok(LooResult {
        loo,
        se: (n * var).sqrt(),
        warning: pareto_k.iter().any(|k| *k > PARETO_K_WARN),
        pointwise,
        pareto_k,
    })
}

/// In-sample log pointwise predictive density, `sum_i log mean_s p(y_i | θ_s)`.
pub fn lppd(log_lik: &[Vec<f64>]) -> f64 {
    log_lik
        .iter()
        .map(|ll| logsumexp(ll) - (ll.len() as f64).ln())
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    #[test]
    fn identical_draws_give_loglik() {
        let ll = vec![vec![-1.3; 200], vec![-0.2; 200]];
        let r = psis_loo(&ll).unwrap();
        assert!((r.pointwise[0] + 1.3).abs() < 1e-12);
        assert!((r.loo + 1.5).abs() < 1e-12);
    }

    #[test]
    fn gpd_fit_recovers_shape() {
        // Exact quantiles of a GPD with k = 0.5, sigma = 1.
        let n = 2000;
        let x: Vec<f64> = (0..n).map(|i| gpd_quantile((i as f64 + 0.5) / n as f64, 0.5, 1.0)).collect();
        let (k, sigma) = gpd_fit(&x);
        assert!((k - 0.5).abs() < 0.05, "{k}");
        assert!((sigma - 1.0).abs() < 0.1, "{sigma}");
    }

    #[test]
    fn light_tails_close_to_log_mean_exp() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let normal = Normal::new(-1.0, 0.05).unwrap();
        let ll: Vec<Vec<f64>> = (0..5).map(|_| (0..1000).map(|_| normal.sample(&mut rng)).collect()).collect();
        let r = psis_loo(&ll).unwrap();
        assert!(r.loo <= lppd(&ll) + 1e-9);
        assert!((r.loo - lppd(&ll)).abs() < 0.02);
        assert!(r.pareto_k.iter().all(|k| *k < 0.5));
    }

    #[test]
    fn rejects_bad_input() {
        assert!(psis_loo(&[]).is_err());
        assert!(psis_loo(&[vec![0.0, f64::NAN]]).is_err());
    }
}
