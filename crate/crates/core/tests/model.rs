use std::collections::BTreeMap;

use mobility_core::model::*;
use mobility_core::synth::{synth_model_data, ModelSynthConfig};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn small_data(variant: Variant) -> (ModelData, Params) {
    let cfg = ModelSynthConfig {
        states: 2,
        days: 90,
        beta_temp: 0.03,
        beta_prec: -0.02,
        variant,
        ..Default::default()
    };
    let s = synth_model_data(&cfg, 11).unwrap();
    (ModelData::prepare(&s.rows, false).unwrap(), s.truth)
}

#[test]
fn gradient_matches_central_differences() {
    for variant in Variant::ALL {
        let (data, truth) = small_data(variant);
        let post = Posterior::new(&data, variant);
        let centre = post.layout.unconstrain(&truth);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let x: Vec<f64> = centre.iter().map(|c| c + 0.2 * rng.sample::<f64, _>(StandardNormal)).collect();
            let (v, g) = post.log_density_grad(&x);
            assert!((v - post.log_density(&x)).abs() <= 1e-9 * v.abs().max(1.0));
            for i in 0..x.len() {
                // Five-point central stencil: the likelihood is sharply curved
                // at small residual scales.
                let h = 1e-4 * x[i].abs().max(1.0);
                let at = |d: f64| {
                    let mut xs = x.clone();
                    xs[i] += d;
                    post.log_density(&xs)
                };
                let fd = (8.0 * (at(h) - at(-h)) - (at(2.0 * h) - at(-2.0 * h))) / (12.0 * h);
                let tol = 1e-5 * fd.abs().max(1.0);
                assert!((g[i] - fd).abs() <= tol, "{} {}: analytic {} vs fd {}", variant.name(), i, g[i], fd);
            }
        }
    }
}

#[test]
fn empty_dataset_gives_prior() {
    let data = ModelData {
        states: vec!["A".into(), "B".into()],
        rows: Vec::new(),
        scales: BTreeMap::new(),
    };
    let p = Params {
        alpha: vec![0.1, -0.2],
        beta_policy: -0.8,
        beta_deaths: -1.1,
        beta_temp: 0.02,
        beta_prec: -0.01,
        beta_adapt: 0.05,
        gamma: vec![0.05, 0.2],
        phi: vec![95.0, 120.0],
        rho: [0.01, 0.0, -0.02, 0.03, 0.0, 0.01, -0.01],
        sigma: 0.07,
    };
    for variant in Variant::ALL {
        assert_eq!(log_posterior(&p, &data, variant), log_prior(&p, variant));
    }
}

fn observation() -> impl Strategy<Value = Observation> {
    (0usize..2, 0usize..7, -3.0..3.0f64, -3.0..3.0f64, -3.0..3.0f64, -3.0..3.0f64, 1.0..366.0f64).prop_map(
        |(state, weekday, s, d, t, p, day)| Observation {
            state,
            date: chrono::NaiveDate::from_ymd_opt(2020, 1, 1).unwrap(),
            weekday,
            y: 0.0,
            stringency: s,
            deaths: d,
            temperature: t,
            precipitation: p,
            day,
            cumulative_stringency: day / 2.0,
        },
    )
}

fn params() -> impl Strategy<Value = Params> {
    (
        prop::array::uniform2(-1.0..1.0f64),
        prop::array::uniform4(-1.0..1.0f64),
        0.0..0.5f64,
        prop::array::uniform2(0.01..1.0f64),
        prop::array::uniform2(90.0..200.0f64),
    )
        .prop_map(|(alpha, b, adapt, gamma, phi)| Params {
            alpha: alpha.to_vec(),
            beta_policy: b[0],
            beta_deaths: b[1],
            beta_temp: b[2],
            beta_prec: b[3],
            beta_adapt: adapt,
            gamma: gamma.to_vec(),
            phi: phi.to_vec(),
            rho: [0.0, 0.01, -0.01, 0.02, 0.0, -0.02, 0.03],
            sigma: 0.1,
        })
}

proptest! {
    #[test]
    fn prediction_is_affine_in_policy(p in params(), row in observation(), b1 in -2.0..2.0f64, b2 in -2.0..2.0f64) {
        for variant in Variant::ALL {
            let at = |b: f64| predict_mean(&Params { beta_policy: b, ..p.clone() }, &row, variant);
            let mid = at(0.5 * (b1 + b2));
            prop_assert!((mid - 0.5 * (at(b1) + at(b2))).abs() < 1e-9);
            prop_assert!((at(b1) - at(b2) - (b1 - b2) * row.stringency).abs() < 1e-9);
        }
    }

    #[test]
    fn adaptation_term_is_bounded(p in params(), row in observation()) {
        for variant in [Variant::Full, Variant::CumulatedStringency] {
            let with = predict_mean(&p, &row, variant);
            let without = predict_mean(&Params { beta_adapt: 0.0, ..p.clone() }, &row, variant);
            let term = with - without;
            prop_assert!(term >= -1e-12 && term <= p.beta_adapt + 1e-12);
        }
    }
}

#[test]
fn posterior_means_do_not_depend_on_seed() {
    let cfg = ModelSynthConfig {
        states: 2,
        days: 150,
        ..Default::default()
    };
    let s = synth_model_data(&cfg, 3).unwrap();
    let data = ModelData::prepare(&s.rows, false).unwrap();
    let fit_cfg = FitConfig {
        sampler: SamplerConfig {
            warmup: 4000,
            draws: 2000,
            thin: 5,
            ..Default::default()
        },
        ..Default::default()
    };
    let a = fit_model(&data, Variant::Baseline, &fit_cfg, 1).unwrap();
    let b = fit_model(&data, Variant::Baseline, &fit_cfg, 2).unwrap();
    assert_ne!(a.draws, b.draws);
    for (pa, pb) in a.summary.iter().zip(&b.summary) {
        let se = (pa.sd * pa.sd / pa.ess + pb.sd * pb.sd / pb.ess).sqrt();
        assert!((pa.mean - pb.mean).abs() <= 2.0 * se.max(1e-12) + 1e-9, "{}: {} vs {}", pa.name, pa.mean, pb.mean);
    }
    // Leave-one-out predictive density never exceeds the in-sample one.
    let loo = a.loo.as_ref().unwrap();
    assert!(loo.loo <= lppd(&a.log_lik) + 1e-9);
}
