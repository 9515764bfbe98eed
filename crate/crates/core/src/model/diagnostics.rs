//! Convergence diagnostics over multiple chains of one scalar quantity.

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

fn var(x: &[f64]) -> f64 {
    let m = mean(x);
    x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (x.len() as f64 - 1.0)
}

fn split(chains: &[Vec<f64>]) -> Vec<&[f64]> {
    chains
        .iter()
        .flat_map(|c| {
            let h = c.len() / 2;
            [&c[..h], &c[c.len() - h..]]
        })
        .collect()
}

/// Within-chain variance and the pooled variance estimate of split chains.
fn variances(parts: &[&[f64]]) -> (f64, f64) {
    let n = parts[0].len() as f64;
    let w = parts.iter().map(|c| var(c)).sum::<f64>() / parts.len() as f64;
    let means: Vec<f64> = parts.iter().map(|c| mean(c)).collect();
    let b_over_n = var(&means);
    (w, (n - 1.0) / n * w + b_over_n)
}

/// Split potential scale reduction factor.
pub fn split_rhat(chains: &[Vec<f64>]) -> f64 {
    let parts = split(chains);
    if parts.len() < 2 || parts[0].len() < 2 {
        return f64::NAN;
    }
    let (w, v) = variances(&parts);
    if w <= 0.0 {
        return if v <= 0.0 { 1.0 } else { f64::INFINITY };
    }
    (v / w).sqrt()
}

fn autocov(x: &[f64], lag: usize) -> f64 {
    let m = mean(x);
    let n = x.len();
    (0..n - lag).map(|i| (x[i] - m) * (x[i + lag] - m)).sum::<f64>() / n as f64
}

/// Effective sample size of split chains, with autocorrelations combined
/// across chains and truncated by Geyer's initial monotone sequence.
pub fn effective_sample_size(chains: &[Vec<f64>]) -> f64 {
    let parts = split(chains);
    if parts.len() < 2 || parts[0].len() < 4 {
        return f64::NAN;
    }
    let n = parts[0].len();
    let total = (parts.len() * n) as f64;
    let (w, v) = variances(&parts);
    if v <= 0.0 {
        return total;
    }
    let rho = |t: usize| 1.0 - (w - parts.iter().map(|c| autocov(c, t)).sum::<f64>() / parts.len() as f64) / v;
    let mut sum_pairs = 0.0;
    let mut prev = f64::INFINITY;
    let mut t = 0;
    while t + 1 < n {
        let p = rho(t) + rho(t + 1);
        if p <= 0.0 {
            break;
        }
        let p = p.min(prev);
        sum_pairs += p;
        prev = p;
        t += 2;
    }
    let tau = (-1.0 + 2.0 * sum_pairs).max(1.0 / total.log10());
    total / tau
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn iid(seed: u64, n: usize, shift: f64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| rng.gen::<f64>() + shift).collect()
    }

    #[test]
    fn iid_chains_mix() {
        let chains: Vec<_> = (0..4).map(|s| iid(s, 2000, 0.0)).collect();
        assert!((split_rhat(&chains) - 1.0).abs() < 0.01);
        let ess = effective_sample_size(&chains);
        assert!(ess > 5000.0 && ess < 12000.0, "{ess}");
    }

    #[test]
    fn shifted_chain_detected() {
        let chains = vec![iid(1, 1000, 0.0), iid(2, 1000, 2.0)];
        assert!(split_rhat(&chains) > 1.1);
    }

    #[test]
    fn autocorrelated_chain_has_low_ess() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let chains: Vec<Vec<f64>> = (0..2)
            .map(|_| {
                let mut x = 0.0;
                (0..4000)
                    .map(|_| {
                        x = 0.95 * x + rng.gen::<f64>() - 0.5;
                        x
                    })
                    .collect()
            })
            .collect();
        // AR(1) with phi = 0.95 has tau = 39.
        let ess = effective_sample_size(&chains);
        assert!(ess > 100.0 && ess < 400.0, "{ess}");
    }
}
