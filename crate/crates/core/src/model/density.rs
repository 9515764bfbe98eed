//! Parameters, priors, likelihood and the log posterior in unconstrained
//! coordinates.

use std::f64::consts::{LN_2, PI};

use serde::{Deserialize, Serialize};

use super::data::{ModelData, Observation, Variant};

const STUDENT_NU: f64 = 3.0;
pub const GAMMA_SHIFT: f64 = 0.01;
pub const PHI_SHIFT: f64 = 90.0;

/// Model parameters on their natural scale. Terms absent from a variant are
/// zero (or empty for the per-state sigmoid parameters).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Params {
    pub alpha: Vec<f64>,
    pub beta_policy: f64,
    pub beta_deaths: f64,
    pub beta_temp: f64,
    pub beta_prec: f64,
    pub beta_adapt: f64,
    pub gamma: Vec<f64>,
    pub phi: Vec<f64>,
    pub rho: [f64; 7],
    pub sigma: f64,
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Linear predictor of one observation.
pub fn predict_mean(p: &Params, row: &Observation, variant: Variant) -> f64 {
    let mut mu = p.alpha[row.state] + p.beta_policy * row.stringency + p.beta_deaths * row.deaths + p.rho[row.weekday];
    if variant.has_weather() {
        mu += p.beta_temp * row.temperature + p.beta_prec * row.precipitation;
    }
    if variant.has_adaptation() {
        let s = row.state;
        mu += p.beta_adapt * sigmoid(p.gamma[s] * (row.adaptation_x(variant) - p.phi[s]));
    }
    mu
}

/// Log density of a Student-t with 3 degrees of freedom.
pub fn student_t_logpdf(y: f64, mu: f64, sigma: f64) -> f64 {
    // ln Γ(2) - ln Γ(3/2) - ln sqrt(3π) = ln 2 - ln π / 2 - ln(3π) / 2
    let c = LN_2 - 0.5 * PI.ln() - 0.5 * (STUDENT_NU * PI).ln();
    let z = (y - mu) / sigma;
    c - sigma.ln() - 0.5 * (STUDENT_NU + 1.0) * (z * z / STUDENT_NU).ln_1p()
}

pub fn log_likelihood(p: &Params, row: &Observation, variant: Variant) -> f64 {
    student_t_logpdf(row.y, predict_mean(p, row, variant), p.sigma)
}

fn normal_logpdf(x: f64, mu: f64, s: f64) -> f64 {
    let z = (x - mu) / s;
    -0.5 * z * z - s.ln() - 0.5 * (2.0 * PI).ln()
}

fn half_normal_logpdf(x: f64, s: f64) -> f64 {
    if x < 0.0 {
        f64::NEG_INFINITY
    } else {
        LN_2 + normal_logpdf(x, 0.0, s)
    }
}

/// Sum of log prior densities; `-inf` outside the support.
pub fn log_prior(p: &Params, variant: Variant) -> f64 {
    if !(p.sigma > 0.0) {
        return f64::NEG_INFINITY;
    }
    let mut lp = p.alpha.iter().map(|a| normal_logpdf(*a, 0.0, 1.0)).sum::<f64>()
        + normal_logpdf(p.beta_policy, -1.0, 0.1)
        + normal_logpdf(p.beta_deaths, -1.0, 0.1)
        + p.rho.iter().map(|r| normal_logpdf(*r, 0.0, 0.1)).sum::<f64>()
        + half_normal_logpdf(p.sigma, 0.05);
    if variant.has_weather() {
        lp += normal_logpdf(p.beta_temp, 0.0, 0.1) + normal_logpdf(p.beta_prec, 0.0, 0.1);
    }
    if variant.has_adaptation() {
        lp += half_normal_logpdf(p.beta_adapt, 0.1);
        lp += p.gamma.iter().map(|g| half_normal_logpdf(g - GAMMA_SHIFT, 0.1)).sum::<f64>();
        lp += p.phi.iter().map(|f| half_normal_logpdf(f - PHI_SHIFT, 10.0)).sum::<f64>();
    }
    lp
}

/// Log prior plus log likelihood of all rows.
pub fn log_posterior(p: &Params, data: &ModelData, variant: Variant) -> f64 {
    let lp = log_prior(p, variant);
    if !lp.is_finite() {
        return lp;
    }
    // Constant terms of the Student-t density hoisted out of the row loop.
    let c = LN_2 - 0.5 * PI.ln() - 0.5 * (STUDENT_NU * PI).ln() - p.sigma.ln();
    let inv = 1.0 / (p.sigma * p.sigma * STUDENT_NU);
    let k = 0.5 * (STUDENT_NU + 1.0);
    let tail: f64 = data
        .rows
        .iter()
        .map(|r| {
            let e = r.y - predict_mean(p, r, variant);
            (e * e * inv).ln_1p()
        })
        .sum();
    lp + c * data.rows.len() as f64 - k * tail
}

/// Position of each parameter in the unconstrained vector. Positive
/// parameters are log-transformed after removing their lower bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layout {
    pub variant: Variant,
    pub n_states: usize,
    alpha: usize,
    policy: usize,
    deaths: usize,
    weather: Option<usize>,
    adapt: Option<usize>,
    rho: usize,
    sigma: usize,
    dim: usize,
}

impl Layout {
    pub fn new(variant: Variant, n_states: usize) -> Self {
        let mut k = 0;
        let mut take = |n: usize| {
            let at = k;
            k += n;
            at
        };
        let alpha = take(n_states);
        let policy = take(1);
        let deaths = take(1);
        let weather = variant.has_weather().then(|| take(2));
        let adapt = variant.has_adaptation().then(|| take(1 + 2 * n_states));
        let rho = take(7);
        let sigma = take(1);
        Layout {
            variant,
            n_states,
            alpha,
            policy,
            deaths,
            weather,
            adapt,
            rho,
            sigma,
            dim: k,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Names of the natural-scale parameters, in vector order.
    pub fn names(&self, states: &[String]) -> Vec<String> {
        let mut n: Vec<String> = states.iter().map(|s| format!("alpha[{s}]")).collect();
        n.push("beta_policy".into());
        n.push("beta_deaths".into());
        if self.weather.is_some() {
            n.push("beta_temp".into());
            n.push("beta_prec".into());
        }
        if self.adapt.is_some() {
            n.push("beta_adapt".into());
            n.extend(states.iter().map(|s| format!("gamma[{s}]")));
            n.extend(states.iter().map(|s| format!("phi[{s}]")));
        }
        n.extend((0..7).map(|w| format!("rho[{w}]")));
        n.push("sigma".into());
        n
    }

    /// Natural-scale values in the same order as [`Layout::names`].
    pub fn natural(&self, p: &Params) -> Vec<f64> {
        let mut v = p.alpha.clone();
        v.push(p.beta_policy);
        v.push(p.beta_deaths);
        if self.weather.is_some() {
            v.push(p.beta_temp);
            v.push(p.beta_prec);
        }
        if self.adapt.is_some() {
            v.push(p.beta_adapt);
            v.extend(&p.gamma);
            v.extend(&p.phi);
        }
        v.extend(p.rho);
        v.push(p.sigma);
        v
    }

    pub fn constrain(&self, x: &[f64]) -> Params {
        let s = self.n_states;
        let (beta_temp, beta_prec) = self.weather.map_or((0.0, 0.0), |w| (x[w], x[w + 1]));
        let (beta_adapt, gamma, phi) = match self.adapt {
            Some(a) => (
                x[a].exp(),
                x[a + 1..a + 1 + s].iter().map(|u| GAMMA_SHIFT + u.exp()).collect(),
                x[a + 1 + s..a + 1 + 2 * s].iter().map(|u| PHI_SHIFT + u.exp()).collect(),
            ),
            None => (0.0, Vec::new(), Vec::new()),
        };
        let mut rho = [0.0; 7];
        rho.copy_from_slice(&x[self.rho..self.rho + 7]);
        Params {
            alpha: x[self.alpha..self.alpha + s].to_vec(),
            beta_policy: x[self.policy],
            beta_deaths: x[self.deaths],
            beta_temp,
            beta_prec,
            beta_adapt,
            gamma,
            phi,
            rho,
            sigma: x[self.sigma].exp(),
        }
    }

    /// Inverse of [`Layout::constrain`]; parameters on their lower bound map
    /// to a large negative value.
    pub fn unconstrain(&self, p: &Params) -> Vec<f64> {
        let log = |v: f64| v.max(1e-300).ln();
        let mut x = vec![0.0; self.dim];
        x[self.alpha..self.alpha + self.n_states].copy_from_slice(&p.alpha);
        x[self.policy] = p.beta_policy;
        x[self.deaths] = p.beta_deaths;
        if let Some(w) = self.weather {
            x[w] = p.beta_temp;
            x[w + 1] = p.beta_prec;
        }
        if let Some(a) = self.adapt {
            x[a] = log(p.beta_adapt);
            for s in 0..self.n_states {
                x[a + 1 + s] = log(p.gamma[s] - GAMMA_SHIFT);
                x[a + 1 + self.n_states + s] = log(p.phi[s] - PHI_SHIFT);
            }
        }
        x[self.rho..self.rho + 7].copy_from_slice(&p.rho);
        x[self.sigma] = log(p.sigma);
        x
    }
}

/// Log posterior density in unconstrained coordinates, including the log
/// Jacobian of the transforms.
#[derive(Debug, Clone)]
pub struct Posterior<'a> {
    pub data: &'a ModelData,
    pub layout: Layout,
}

impl<'a> Posterior<'a> {
    pub fn new(data: &'a ModelData, variant: Variant) -> Self {
        Posterior {
            data,
            layout: Layout::new(variant, data.n_states()),
        }
    }

    fn log_jacobian(&self, x: &[f64]) -> f64 {
        let l = &self.layout;
        let mut j = x[l.sigma];
        if let Some(a) = l.adapt {
            j += x[a..a + 1 + 2 * l.n_states].iter().sum::<f64>();
        }
        j
    }

    pub fn log_density(&self, x: &[f64]) -> f64 {
        if x.iter().any(|v| !v.is_finite()) {
            return f64::NEG_INFINITY;
        }
        let p = self.layout.constrain(x);
        let v = log_posterior(&p, self.data, self.layout.variant) + self.log_jacobian(x);
        if v.is_nan() {
            f64::NEG_INFINITY
        } else {
            v
        }
    }

    /// Pointwise log likelihood of every row.
    pub fn pointwise(&self, x: &[f64]) -> Vec<f64> {
        let p = self.layout.constrain(x);
        self.data
            .rows
            .iter()
            .map(|r| log_likelihood(&p, r, self.layout.variant))
            .collect()
    }

    /// Value and gradient of [`Posterior::log_density`].
    pub fn log_density_grad(&self, x: &[f64]) -> (f64, Vec<f64>) {
        let l = &self.layout;
        let variant = l.variant;
        let p = l.constrain(x);
        let s = l.n_states;
        let mut g = vec![0.0; l.dim];

        // Priors and Jacobian, in unconstrained coordinates.
        for k in 0..s {
            g[l.alpha + k] -= p.alpha[k];
        }
        g[l.policy] -= (p.beta_policy + 1.0) / 0.01;
        g[l.deaths] -= (p.beta_deaths + 1.0) / 0.01;
        if let Some(w) = l.weather {
            g[w] -= p.beta_temp / 0.01;
            g[w + 1] -= p.beta_prec / 0.01;
        }
        if let Some(a) = l.adapt {
            // d/du [log HalfN(e^u; s) + u] = 1 - e^{2u} / s^2
            g[a] += 1.0 - p.beta_adapt.powi(2) / 0.01;
            for k in 0..s {
                g[a + 1 + k] += 1.0 - (p.gamma[k] - GAMMA_SHIFT).powi(2) / 0.01;
                g[a + 1 + s + k] += 1.0 - (p.phi[k] - PHI_SHIFT).powi(2) / 100.0;
            }
        }
        for w in 0..7 {
            g[l.rho + w] -= p.rho[w] / 0.01;
        }
        g[l.sigma] += 1.0 - p.sigma.powi(2) / 0.0025;

        // Likelihood.
        let mut ll = 0.0;
        for r in &self.data.rows {
            let mut mu = p.alpha[r.state] + p.beta_policy * r.stringency + p.beta_deaths * r.deaths + p.rho[r.weekday];
            if variant.has_weather() {
                mu += p.beta_temp * r.temperature + p.beta_prec * r.precipitation;
            }
            let mut sig = 0.0;
            if variant.has_adaptation() {
                sig = sigmoid(p.gamma[r.state] * (r.adaptation_x(variant) - p.phi[r.state]));
                mu += p.beta_adapt * sig;
            }
            let z = (r.y - mu) / p.sigma;
            let q = 1.0 + z * z / STUDENT_NU;
            ll += student_t_logpdf(r.y, mu, p.sigma);
            // d ll / d mu and d ll / d log sigma
            let dmu = (STUDENT_NU + 1.0) / STUDENT_NU * z / (q * p.sigma);
            g[l.sigma] += -1.0 + (STUDENT_NU + 1.0) / STUDENT_NU * z * z / q;
            g[l.alpha + r.state] += dmu;
            g[l.policy] += dmu * r.stringency;
            g[l.deaths] += dmu * r.deaths;
            g[l.rho + r.weekday] += dmu;
            if let Some(w) = l.weather {
                g[w] += dmu * r.temperature;
                g[w + 1] += dmu * r.precipitation;
            }
            if let Some(a) = l.adapt {
                let k = r.state;
                let dx = r.adaptation_x(variant) - p.phi[k];
                let ds = sig * (1.0 - sig);
                g[a] += dmu * p.beta_adapt * sig;
                g[a + 1 + k] += dmu * p.beta_adapt * ds * dx * (p.gamma[k] - GAMMA_SHIFT);
                g[a + 1 + s + k] -= dmu * p.beta_adapt * ds * p.gamma[k] * (p.phi[k] - PHI_SHIFT);
            }
        }
        let value = log_prior(&p, variant) + self.log_jacobian(x) + ll;
        (value, g)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::NaiveDate;

    fn params(n: usize) -> Params {
        Params {
            alpha: vec![0.3; n],
            beta_policy: 0.0,
            beta_deaths: 0.0,
            beta_temp: 0.0,
            beta_prec: 0.0,
            beta_adapt: 0.0,
            gamma: vec![0.1; n],
            phi: vec![100.0; n],
            rho: [0.0; 7],
            sigma: 0.05,
        }
    }

    fn obs(day: f64) -> Observation {
        Observation {
            state: 0,
            date: NaiveDate::from_ymd_opt(2020, 4, 1).unwrap(),
            weekday: 2,
            y: 0.0,
            stringency: 1.2,
            deaths: -0.4,
            temperature: 0.5,
            precipitation: 2.0,
            day,
            cumulative_stringency: 3.0,
        }
    }

    #[test]
    fn intercept_only_prediction() {
        assert_eq!(predict_mean(&params(1), &obs(50.0), Variant::Full), 0.3);
    }

    #[test]
    fn sigmoid_midpoint_and_step() {
        let mut p = params(1);
        p.alpha[0] = 0.0;
        p.beta_adapt = 0.118;
        assert!((predict_mean(&p, &obs(100.0), Variant::Full) - 0.059).abs() < 1e-15);
        p.gamma[0] = 1e6;
        assert_eq!(predict_mean(&p, &obs(100.01), Variant::Full), 0.118);
        assert_eq!(predict_mean(&p, &obs(99.99), Variant::Full), 0.0);
    }

    #[test]
    fn student_t_mode_and_scaling() {
        use statrs::function::gamma::ln_gamma;
        let mode = ln_gamma(2.0) - ln_gamma(1.5) - (3.0 * PI).sqrt().ln() - 0.2f64.ln();
        assert!((student_t_logpdf(1.0, 1.0, 0.2) - mode).abs() < 1e-12);
        let diff = student_t_logpdf(1.0, 1.0, 0.2) - student_t_logpdf(1.0, 1.0, 0.4);
        assert!((diff - LN_2).abs() < 1e-12);
        assert!(student_t_logpdf(1.3, 1.0, 0.2) < student_t_logpdf(1.1, 1.0, 0.2));
    }

    #[test]
    fn prior_support() {
        let mut p = params(2);
        p.beta_adapt = -0.01;
        assert_eq!(log_prior(&p, Variant::Full), f64::NEG_INFINITY);
        assert!(log_prior(&p, Variant::Weather).is_finite());
        p.beta_adapt = 0.0;
        p.gamma[1] = 0.005;
        assert_eq!(log_prior(&p, Variant::Full), f64::NEG_INFINITY);
    }

    #[test]
    fn layout_round_trip() {
        let l = Layout::new(Variant::Full, 3);
        assert_eq!(l.dim(), 3 + 2 + 2 + 1 + 6 + 7 + 1);
        let x: Vec<f64> = (0..l.dim()).map(|i| (i as f64 * 0.37).sin()).collect();
        let back = l.unconstrain(&l.constrain(&x));
        for (a, b) in x.iter().zip(&back) {
            assert!((a - b).abs() < 1e-9);
        }
        assert_eq!(l.names(&["a".into(), "b".into(), "c".into()]).len(), l.dim());
        assert_eq!(Layout::new(Variant::Baseline, 1).dim(), 1 + 2 + 7 + 1);
    }
}
