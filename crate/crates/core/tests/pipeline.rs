use std::fs;
use std::process::Command;

use mobility_core::io;
use mobility_core::model::{SamplerConfig, Variant};
use mobility_core::pipeline::{run_pipeline, Manifest, PipelineConfig, MANIFEST_FILE, TIMINGS_FILE};
use mobility_core::synth::{synth_model_data, CitySpec, ModelSynthConfig};

fn small_city() -> CitySpec {
    CitySpec {
        n_users: 12,
        n_days: 70,
        ..CitySpec::default()
    }
}

#[test]
fn empty_pings_give_empty_but_valid_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let pings = dir.path().join("pings.csv");
    fs::write(&pings, "user_id,timestamp,lat,lon\n").unwrap();
    let cfg = PipelineConfig {
        input: mobility_core::pipeline::InputConfig {
            pings: Some(pings),
            ..Default::default()
        },
        ..Default::default()
    };
    let out = dir.path().join("out");
    let m = run_pipeline(&cfg, &out).unwrap();
    assert_eq!(m.counts["users_in"], 0);
    assert_eq!(m.counts["visits"], 0);
    let visits = io::read_visits(io::open(&out.join("visits.csv")).unwrap(), b',').unwrap();
    assert!(visits.is_empty());
    for f in &m.files {
        assert!(out.join(&f.path).exists(), "{}", f.path);
    }
}

#[test]
fn run_conserves_rows_and_fits_models() {
    let dir = tempfile::tempdir().unwrap();
    let model_input = dir.path().join("model_input.csv");
    let rows = synth_model_data(
        &ModelSynthConfig {
            states: 2,
            days: 60,
            ..Default::default()
        },
        4,
    )
    .unwrap()
    .rows;
    io::write_model_input(io::create(&model_input).unwrap(), &rows, b',').unwrap();

    let mut cfg = PipelineConfig {
        seed: 3,
        timezone: "America/New_York".into(),
        synth: Some(small_city()),
        ..Default::default()
    };
    cfg.input.model_input = Some(model_input);
    cfg.routines.shuffles = 20;
    cfg.routines.max_cluster_users = 5;
    cfg.model.variants = vec![Variant::Baseline, Variant::Full];
    cfg.model.fit.sampler = SamplerConfig {
        warmup: 1000,
        draws: 200,
        thin: 1,
        chains: 2,
        ..Default::default()
    };
    let out = dir.path().join("out");
    let m = run_pipeline(&cfg, &out).unwrap();

    assert_eq!(m.counts["users_kept"], 12);
    assert_eq!(m.counts["visits"], m.counts["stop_events"]);
    let visits = io::read_visits(io::open(&out.join("visits.csv")).unwrap(), b',').unwrap();
    assert_eq!(visits.len(), m.counts["visits"]);
    let events = io::read_stop_locations(io::open(&out.join("stop_events.csv")).unwrap(), b',').unwrap();
    assert_eq!(events.iter().map(|l| l.member_events.len()).sum::<usize>(), visits.len());

    // Only the subsample is clustered.
    let routines = fs::read_to_string(out.join("user_routines.csv")).unwrap();
    for period in ["pre", "during"] {
        let rows: Vec<&str> = routines.lines().filter(|l| l.starts_with(&format!("{period},"))).collect();
        assert_eq!(rows.len(), 12);
        assert_eq!(rows.iter().filter(|l| !l.ends_with(',')).count(), 5);
    }

    let summary: serde_json::Value = serde_json::from_slice(&fs::read(out.join("model/summary.json")).unwrap()).unwrap();
    assert_eq!(summary["variants"].as_array().unwrap().len(), 2);
    let weights: f64 = summary["comparison"].as_array().unwrap().iter().map(|r| r["weight"].as_f64().unwrap()).sum();
    assert!((weights - 1.0).abs() < 1e-9);
    let draws = fs::read_to_string(out.join("model/draws_full.csv")).unwrap();
    assert_eq!(draws.lines().count(), 1 + 2 * 200);

    let on_disk: Manifest = serde_json::from_slice(&fs::read(out.join(MANIFEST_FILE)).unwrap()).unwrap();
    assert_eq!(on_disk, m);
    assert!(out.join(TIMINGS_FILE).exists());
}

#[test]
fn cli_runs_from_a_config_with_overrides() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("run.toml"),
        "seed = 5\ntimezone = \"America/New_York\"\noutput_dir = \"out\"\n[synth]\nn_users = 6\n[routines]\nshuffles = 10\n",
    )
    .unwrap();
    let bin = env!("CARGO_BIN_EXE_mobility");
    let run = |extra: &[&str]| {
        Command::new(bin)
            .arg("--config")
            .arg(dir.path().join("run.toml"))
            .args(extra)
            .env("MOBILITY_OUTPUT_ROOT", dir.path())
            .output()
            .unwrap()
    };
    let ok = run(&["--set", "colocation.enabled=false", "run"]);
    assert!(ok.status.success(), "{}", String::from_utf8_lossy(&ok.stderr));
    let m: Manifest = serde_json::from_slice(&fs::read(dir.path().join("out").join(MANIFEST_FILE)).unwrap()).unwrap();
    assert_eq!(m.seed, 5);
    assert_eq!(m.counts["users_in"], 6);
    assert!(!m.counts.contains_key("colocations"));

    let bad = run(&["--set", "stops.nope=1", "run"]);
    assert_eq!(bad.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&bad.stderr).contains("nope"));
}
