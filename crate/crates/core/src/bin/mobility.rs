use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;

use mobility_core::io;
use mobility_core::model::{ModelData, Variant};
use mobility_core::pipeline::{self, output_root, PipelineConfig};
use mobility_core::semantics::PoiIndex;
use mobility_core::synth::{generate_city, synth_model_data, ModelSynthConfig};
use mobility_core::{Error, Result};

/// GPS mobility-panel analytics.
///
/// Every subcommand reads an optional TOML config; `--set section.key=value`
/// overrides any field of it, and the dedicated flags override the common ones.
#[derive(Parser, Debug)]
#[command(name = "mobility", version)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// Pipeline config (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override a config field, e.g. `--set stops.delta_s=80`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    timezone: Option<String>,
    #[arg(long, global = true)]
    delimiter: Option<String>,
    /// Output directory. Relative paths go under $MOBILITY_OUTPUT_ROOT when set.
    #[arg(long, short, global = true)]
    output_dir: Option<PathBuf>,
    /// Log more (-v info, -vv debug).
    #[arg(short, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Detect stop events and cluster them into stop locations.
    Stops {
        #[arg(long)]
        pings: PathBuf,
        /// Spatial threshold in meters.
        #[arg(long)]
        delta_s: Option<f64>,
        /// Temporal threshold in seconds.
        #[arg(long)]
        delta_t: Option<i64>,
        #[arg(long)]
        eps_dbscan: Option<f64>,
        #[arg(long)]
        min_points: Option<usize>,
    },
    /// Label stop events as residential, workplace, POI or other.
    Label {
        /// Stop events as written by `stops`.
        #[arg(long)]
        events: PathBuf,
        #[arg(long)]
        pois: PathBuf,
        #[arg(long)]
        match_radius_m: Option<f64>,
        /// Category to drop before matching. Repeatable.
        #[arg(long = "exclude")]
        exclude: Vec<String>,
    },
    /// Mine significant routines before and during the analysis period.
    Routines {
        #[arg(long)]
        visits: PathBuf,
        #[arg(long)]
        shuffles: Option<usize>,
        #[arg(long)]
        cut_fraction: Option<f64>,
    },
    /// Detect co-locations and compare them against the null model.
    Coloc {
        #[arg(long)]
        visits: PathBuf,
        #[arg(long)]
        radius_m: Option<f64>,
        #[arg(long)]
        min_overlap_s: Option<i64>,
    },
    /// Daily visit series and rolling behaviour-change metrics.
    Metrics {
        #[arg(long)]
        visits: PathBuf,
        /// Pings, for the daily time-allocation coverage.
        #[arg(long)]
        pings: Option<PathBuf>,
        #[arg(long)]
        cohort: Option<String>,
        #[arg(long)]
        window_len: Option<i64>,
    },
    /// Fit the Bayesian visit model variants and compare them.
    Model {
        #[arg(long)]
        input: PathBuf,
        /// Variant to fit. Repeatable; defaults to the configured list.
        #[arg(long = "variant", value_parser = Variant::parse)]
        variants: Vec<Variant>,
        #[arg(long)]
        warmup: Option<usize>,
        #[arg(long)]
        draws: Option<usize>,
        #[arg(long)]
        chains: Option<usize>,
        #[arg(long)]
        thin: Option<usize>,
        /// Fit on the raw outcome scale.
        #[arg(long)]
        raw_y: bool,
    },
    /// Generate a synthetic city: pings, POIs and the true stays.
    Synth {
        #[arg(long)]
        users: Option<usize>,
        #[arg(long)]
        days: Option<u32>,
        /// Also write a synthetic model input generated from the full model.
        #[arg(long)]
        model_input: bool,
    },
    /// Run the whole chain from the config.
    Run {
        #[arg(long)]
        pings: Option<PathBuf>,
        #[arg(long)]
        pois: Option<PathBuf>,
        #[arg(long)]
        model_input: Option<PathBuf>,
        /// Filter the panel around this date (YYYY-MM-DD).
        #[arg(long)]
        reference_date: Option<chrono::NaiveDate>,
        #[arg(long)]
        strict_panel: bool,
    },
}

/// Sets `path` (dotted) in a TOML table, parsing `raw` as a TOML value and
/// falling back to a string.
fn set_path(root: &mut toml::Table, path: &str, raw: &str) -> Result<()> {
    let value: toml::Value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let mut keys: Vec<&str> = path.split('.').collect();
    let last = keys.pop().filter(|k| !k.is_empty()).ok_or_else(|| Error::config(format!("bad override key `{path}`")))?;
    let mut table = root;
    for k in keys {
        table = table
            .entry(k)
            .or_insert_with(|| toml::Value::Table(Default::default()))
            .as_table_mut()
            .ok_or_else(|| Error::config(format!("`{k}` in `{path}` is not a table")))?;
    }
    table.insert(last.to_string(), value);
    Ok(())
}

fn load_config(c: &Common) -> Result<PipelineConfig> {
    let mut cfg = match &c.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    if !c.overrides.is_empty() {
        let mut table = toml::Table::try_from(&cfg).map_err(|e| Error::config(e.to_string()))?;
        for o in &c.overrides {
            let (k, v) = o.split_once('=').ok_or_else(|| Error::config(format!("override `{o}` is not KEY=VALUE")))?;
            set_path(&mut table, k.trim(), v.trim())?;
        }
        let base = c.config.as_deref().and_then(Path::parent).unwrap_or(Path::new("")).to_path_buf();
        cfg = PipelineConfig::from_toml(&table.to_string())?;
        cfg.resolve_paths(&base);
    }
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    if let Some(t) = &c.timezone {
        cfg.timezone = t.clone();
    }
    if let Some(d) = &c.delimiter {
        cfg.delimiter = d.clone();
    }
    if let Some(o) = &c.output_dir {
        cfg.output_dir = o.clone();
    }
    Ok(cfg)
}

fn set<T>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = load_config(&cli.common)?;
    let out = output_root(&cfg.output_dir);
    let delim = cfg.delimiter_byte()?;
    let clock = cfg.clock()?;
    match cli.command {
        Command::Stops {
            pings,
            delta_s,
            delta_t,
            eps_dbscan,
            min_points,
        } => {
            set(&mut cfg.stops.delta_s, delta_s);
            set(&mut cfg.stops.delta_t, delta_t);
            set(&mut cfg.stops.eps_dbscan, eps_dbscan);
            set(&mut cfg.stops.min_points, min_points);
            let traj = io::read_pings(io::open(&pings)?, delim).map_err(|e| e.in_file(&pings))?;
            let locs: Vec<_> = pipeline::detect_stops(&traj, &cfg.stops)?.into_iter().flatten().collect();
            write(&out.join("stop_events.csv"), |w| io::write_stop_events(w, &locs, delim))?;
            write(&out.join("stop_locations.csv"), |w| io::write_stop_locations(w, &locs, delim))?;
            info!("{} stop locations from {} users", locs.len(), traj.len());
        }
        Command::Label {
            events,
            pois,
            match_radius_m,
            exclude,
        } => {
            set(&mut cfg.labels.match_radius_m, match_radius_m);
            cfg.labels.exclude_categories.extend(exclude);
            let locs = io::read_stop_locations(io::open(&events)?, delim).map_err(|e| e.in_file(&events))?;
            let pois = pipeline::filter_pois(io::read_pois_file(&pois, delim)?, &cfg.labels.exclude_categories);
            let index = PoiIndex::new(pois);
            let by_user = group_by_user(locs, |l| l.user_id.clone());
            let visits: Vec<_> =
                pipeline::label_all(&by_user, &index, cfg.labels.match_radius_m, &clock).into_iter().flatten().collect();
            write(&out.join("visits.csv"), |w| io::write_visits(w, &visits, delim))?;
            info!("{} visits labelled", visits.len());
        }
        Command::Routines {
            visits,
            shuffles,
            cut_fraction,
        } => {
            set(&mut cfg.routines.shuffles, shuffles);
            set(&mut cfg.routines.cut_fraction, cut_fraction);
            let by_user = read_visits_by_user(&visits, delim)?;
            let p = cfg.periods;
            let mut records = Vec::new();
            let mut users = Vec::new();
            for (name, range) in [("pre", (p.baseline_start, p.baseline_end)), ("during", (p.analysis_start, p.analysis_end))] {
                let m = pipeline::mine_period(&by_user, name, range, &cfg.routines, cfg.seed)?;
                info!("{name}: {} users, silhouette {:?}", m.users.len(), m.silhouette);
                records.extend(m.records);
                users.push(m.users);
            }
            let edges = mobility_core::routines::edge_changes(
                &mobility_core::routines::routine_network(&users[0]),
                &mobility_core::routines::routine_network(&users[1]),
            );
            write(&out.join("routines.jsonl"), |w| io::write_jsonl(w, &records))?;
            write(&out.join("network.csv"), |w| io::write_network(w, &edges))?;
        }
        Command::Coloc {
            visits,
            radius_m,
            min_overlap_s,
        } => {
            set(&mut cfg.colocation.radius_m, radius_m);
            set(&mut cfg.colocation.min_overlap_s, min_overlap_s);
            let by_user = read_visits_by_user(&visits, delim)?;
            let (events, report) = pipeline::colocation_stage(&by_user, &cfg.colocation, &clock)?;
            write(&out.join("colocations.csv"), |w| io::write_colocations(w, &events, delim))?;
            write(&out.join("null_model.csv"), |w| io::write_null_model(w, &report))?;
            info!("{} co-locations", events.len());
        }
        Command::Metrics {
            visits,
            pings,
            cohort,
            window_len,
        } => {
            set(&mut cfg.metrics.cohort, cohort);
            set(&mut cfg.metrics.window_len, window_len);
            cfg.window_config().validate()?;
            let by_user = read_visits_by_user(&visits, delim)?;
            let traj = match &pings {
                Some(p) => io::read_pings(io::open(p)?, delim).map_err(|e| e.in_file(p))?,
                None => Vec::new(),
            };
            let taxonomy = mobility_core::semantics::Taxonomy::builtin();
            let series = pipeline::compute_metrics(&by_user, &traj, &taxonomy, &cfg, &clock)?;
            write(&out.join("metrics.csv"), |w| mobility_core::metrics::write_tidy_csv(w, &series))?;
        }
        Command::Model {
            input,
            variants,
            warmup,
            draws,
            chains,
            thin,
            raw_y,
        } => {
            if !variants.is_empty() {
                cfg.model.variants = variants;
            }
            let s = &mut cfg.model.fit.sampler;
            set(&mut s.warmup, warmup);
            set(&mut s.draws, draws);
            set(&mut s.chains, chains);
            set(&mut s.thin, thin);
            s.validate()?;
            if raw_y {
                cfg.model.standardize_y = false;
            }
            let rows = io::read_model_input(io::open(&input)?, delim).map_err(|e| e.in_file(&input))?;
            let data = ModelData::prepare(&rows, cfg.model.standardize_y)?;
            let (fits, summary) = pipeline::model_stage(&data, &cfg.model, cfg.seed)?;
            for f in &fits {
                write(&out.join(format!("draws_{}.csv", f.variant.name())), |w| io::write_draws(w, f))?;
            }
            write(&out.join("model_summary.json"), |w| {
                serde_json::to_writer_pretty(&mut *w, &summary)?;
                Ok(())
            })?;
            for r in &summary.comparison {
                println!("{:<22} loo {:>10.2} ± {:<8.2} weight {:.3}", r.variant.name(), r.loo, r.se, r.weight);
            }
        }
        Command::Synth { users, days, model_input } => {
            let mut spec = cfg.synth.clone().unwrap_or_default();
            set(&mut spec.n_users, users);
            set(&mut spec.n_days, days);
            let city = generate_city(&spec, cfg.seed)?;
            write(&out.join("pings.csv"), |w| io::write_pings(w, &city.trajectories, delim))?;
            write(&out.join("pois.csv"), |w| io::write_pois(w, &city.pois, delim))?;
            write(&out.join("stays.jsonl"), |w| io::write_jsonl(w, &city.stays))?;
            if model_input {
                let m = synth_model_data(&ModelSynthConfig::default(), cfg.seed)?;
                write(&out.join("model_input.csv"), |w| io::write_model_input(w, &m.rows, delim))?;
            }
        }
        Command::Run {
            pings,
            pois,
            model_input,
            reference_date,
            strict_panel,
        } => {
            if pings.is_some() {
                cfg.input.pings = pings;
            }
            if pois.is_some() {
                cfg.input.pois = pois;
            }
            if model_input.is_some() {
                cfg.input.model_input = model_input;
            }
            if reference_date.is_some() {
                cfg.panel.reference_date = reference_date;
            }
            cfg.panel.strict |= strict_panel;
            let m = pipeline::run_pipeline(&cfg, &out)?;
            for (k, v) in &m.counts {
                println!("{k:<16} {v}");
            }
            println!("wrote {} files to {}", m.files.len() + 2, out.display());
        }
    }
    Ok(())
}

fn write(path: &Path, f: impl FnOnce(&mut dyn std::io::Write) -> Result<()>) -> Result<()> {
    let mut w = io::create(path)?;
    f(&mut w).map_err(|e| e.in_file(path))?;
    std::io::Write::flush(&mut w).map_err(|e| Error::from(e).in_file(path))
}

fn group_by_user<T>(items: Vec<T>, key: impl Fn(&T) -> String) -> Vec<Vec<T>> {
    let mut groups: std::collections::BTreeMap<String, Vec<T>> = Default::default();
    for it in items {
        groups.entry(key(&it)).or_default().push(it);
    }
    groups.into_values().collect()
}

fn read_visits_by_user(path: &Path, delim: u8) -> Result<Vec<Vec<mobility_core::semantics::Visit>>> {
    let visits = io::read_visits(io::open(path)?, delim).map_err(|e| e.in_file(path))?;
    Ok(group_by_user(visits, |v| v.user_id.clone()))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.common.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            // Wrapped errors already print their source.
            eprintln!("error: {e}");
            match e {
                Error::Config(_) | Error::Toml(_) => ExitCode::from(2),
                _ => ExitCode::FAILURE,
            }
        }
    }
}
