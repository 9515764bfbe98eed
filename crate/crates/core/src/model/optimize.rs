//! Posterior mode and Laplace approximation.

use argmin::core::{CostFunction, Executor, Gradient};
use argmin::solver::linesearch::MoreThuenteLineSearch;
use argmin::solver::quasinewton::LBFGS;
use nalgebra::DMatrix;

use super::density::Posterior;
use crate::{Error, Result};

struct Negated<'p, 'd>(&'p Posterior<'d>);

impl CostFunction for Negated<'_, '_> {
    type Param = Vec<f64>;
    type Output = f64;

    fn cost(&self, x: &Self::Param) -> std::result::Result<f64, argmin::core::Error> {
        let v = self.0.log_density(x);
        Ok(if v.is_finite() { -v } else { f64::MAX })
    }
}

impl Gradient for Negated<'_, '_> {
    type Param = Vec<f64>;
    type Gradient = Vec<f64>;

    fn gradient(&self, x: &Self::Param) -> std::result::Result<Vec<f64>, argmin::core::Error> {
        Ok(self.0.log_density_grad(x).1.into_iter().map(|g| -g).collect())
    }
}

/// Maximises the log density with L-BFGS from one starting point.
pub fn maximize(post: &Posterior, start: Vec<f64>, max_iters: u64) -> Result<(Vec<f64>, f64)> {
    let solver = LBFGS::new(MoreThuenteLineSearch::new(), 10)
        .with_tolerance_grad(1e-8)
        .map_err(|e| Error::Sampler(e.to_string()))?
        .with_tolerance_cost(1e-12)
        .map_err(|e| Error::Sampler(e.to_string()))?;
    let res = Executor::new(Negated(post), solver)
        .configure(|s| s.param(start).max_iters(max_iters))
        .run()
        .map_err(|e| Error::Sampler(format!("mode search failed: {e}")))?;
    let best = res
        .state
        .best_param
        .ok_or_else(|| Error::Sampler("mode search returned no point".into()))?;
    let v = post.log_density(&best);
    Ok((best, v))
}

/// Negative inverse Hessian of the log density at `x`, from central
/// differences of the analytic gradient. A ridge is added when the Hessian
/// is not negative definite.
pub fn laplace_covariance(post: &Posterior, x: &[f64]) -> DMatrix<f64> {
    let d = x.len();
    let mut h = DMatrix::zeros(d, d);
    for i in 0..d {
        let step = 1e-5 * x[i].abs().max(1.0);
        let mut hi = x.to_vec();
        hi[i] += step;
        let mut lo = x.to_vec();
        lo[i] -= step;
        let (gh, gl) = (post.log_density_grad(&hi).1, post.log_density_grad(&lo).1);
        for j in 0..d {
            h[(i, j)] = -(gh[j] - gl[j]) / (2.0 * step);
        }
    }
    let h = (&h + h.transpose()) * 0.5;
    let scale = (h.trace() / d as f64).abs().max(1e-8);
    for attempt in 0..12 {
        let ridge = if attempt == 0 { 0.0 } else { scale * 1e-8 * 10f64.powi(attempt) };
        let m = &h + DMatrix::identity(d, d) * ridge;
        if let Some(ch) = m.cholesky() {
            return ch.inverse();
        }
    }
    DMatrix::identity(d, d) / scale
}
