//! Batch orchestration: configuration, panel filtering and the stage chain
//! pings → stops → visits → {routines, co-location, metrics} → model.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use chrono::{Duration, NaiveDate};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::clock::{dates, Clock};
use crate::colocation::{detect_colocations, null_model_report, ColocationConfig, ColocationEvent, DurationFormula, NullModelRow};
use crate::io;
use crate::metrics::{
    daily_visit_series, percent_change, Aggregate, rolling_change, time_allocation, window_metrics, write_tidy_csv, DailySeries,
    SeriesKey, Weighting, WindowConfig,
};
use crate::model::{compare_models, fit_model, ComparisonRow, FitConfig, ModelData, ModelFit, Outcome, ParamSummary, Variant};
use crate::routines::{
    agglomerative_cluster, compression_ratio, edge_changes, jaccard_matrix, routine_network, sequitur, significant_routines,
    silhouette, user_seed, Alphabet, EdgeChange, SymbolSequence, UserRoutines, DEFAULT_SHUFFLES,
};
use crate::semantics::{annotate_user, Poi, PoiIndex, Taxonomy, Visit, DEFAULT_MATCH_RADIUS_M};
use crate::synth::{generate_city, CitySpec, SyntheticCity};
use crate::trajectory::{cluster_stop_locations, detect_stop_events_chunked, StopConfig, StopLocation, Trajectory};
use crate::{Error, Result};

/// Environment variable naming the directory relative output paths resolve
/// against.
pub const OUTPUT_ROOT_ENV: &str = "MOBILITY_OUTPUT_ROOT";

fn date(y: i32, m: u32, d: u32) -> NaiveDate {
    NaiveDate::from_ymd_opt(y, m, d).expect("valid date")
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InputConfig {
    pub pings: Option<PathBuf>,
    pub pois: Option<PathBuf>,
    pub model_input: Option<PathBuf>,
    /// `l1,l2` CSV replacing the built-in taxonomy.
    pub taxonomy: Option<PathBuf>,
    /// One second-level name per line, replacing the built-in essential list.
    pub essential_shops: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LabelConfig {
    pub match_radius_m: f64,
    /// First- or second-level category names whose POIs are dropped before
    /// matching.
    pub exclude_categories: Vec<String>,
}

impl Default for LabelConfig {
    fn default() -> Self {
        LabelConfig {
            match_radius_m: DEFAULT_MATCH_RADIUS_M,
            exclude_categories: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PanelConfig {
    /// Users are only filtered when a reference date is given.
    pub reference_date: Option<NaiveDate>,
    pub pre_days: u32,
    pub post_days: u32,
    pub min_hours: f64,
    /// Require 30 observed days before and 120 after the reference date
    /// instead of `pre_days` and `post_days`.
    pub strict: bool,
}

impl Default for PanelConfig {
    fn default() -> Self {
        PanelConfig {
            reference_date: None,
            pre_days: 7,
            post_days: 7,
            min_hours: 5.0,
            strict: false,
        }
    }
}

impl PanelConfig {
    fn thresholds(&self) -> (u32, u32) {
        if self.strict {
            (30, 120)
        } else {
            (self.pre_days, self.post_days)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PeriodConfig {
    pub baseline_start: NaiveDate,
    pub baseline_end: NaiveDate,
    pub analysis_start: NaiveDate,
    pub analysis_end: NaiveDate,
}

impl Default for PeriodConfig {
    fn default() -> Self {
        PeriodConfig {
            baseline_start: date(2020, 2, 3),
            baseline_end: date(2020, 3, 8),
            analysis_start: date(2020, 3, 9),
            analysis_end: date(2020, 4, 12),
        }
    }
}

impl PeriodConfig {
    pub fn validate(&self) -> Result<()> {
        if self.baseline_end < self.baseline_start || self.analysis_end < self.analysis_start {
            return Err(Error::config("periods must not end before they start"));
        }
        if self.analysis_start <= self.baseline_end {
            return Err(Error::config("the baseline period must precede the analysis period"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RoutineConfig {
    pub enabled: bool,
    pub shuffles: usize,
    /// Dendrogram cut as a fraction of the largest merge height.
    pub cut_fraction: f64,
    /// Users beyond this many are subsampled (seeded) before clustering.
    pub max_cluster_users: usize,
}

impl Default for RoutineConfig {
    fn default() -> Self {
        RoutineConfig {
            enabled: true,
            shuffles: DEFAULT_SHUFFLES,
            cut_fraction: 0.95,
            max_cluster_users: 10_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ColocStageConfig {
    pub enabled: bool,
    pub radius_m: f64,
    pub min_overlap_s: i64,
    pub duration_formula: DurationFormula,
}

impl Default for ColocStageConfig {
    fn default() -> Self {
        let c = ColocationConfig::default();
        ColocStageConfig {
            enabled: true,
            radius_m: c.radius_m,
            min_overlap_s: c.min_overlap_s,
            duration_formula: DurationFormula::default(),
        }
    }
}

impl ColocStageConfig {
    pub fn detection(&self) -> ColocationConfig {
        ColocationConfig {
            radius_m: self.radius_m,
            min_overlap_s: self.min_overlap_s,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsConfig {
    pub enabled: bool,
    pub cohort: String,
    pub window_len: i64,
    pub shift: i64,
    /// Across-user combination of window metrics.
    pub aggregate: Aggregate,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        MetricsConfig {
            enabled: true,
            cohort: "all".into(),
            window_len: 14,
            shift: 1,
            aggregate: Aggregate::Median,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelStageConfig {
    pub variants: Vec<Variant>,
    pub outcome: Outcome,
    pub standardize_y: bool,
    pub fit: FitConfig,
}

impl Default for ModelStageConfig {
    fn default() -> Self {
        ModelStageConfig {
            variants: vec![Variant::Baseline, Variant::Weather, Variant::Full],
            outcome: Outcome::default(),
            standardize_y: true,
            fit: FitConfig::default(),
        }
    }
}

/// Everything a pipeline run needs. Relative paths resolve against the
/// directory of the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    pub timezone: String,
    /// Field delimiter of delimited input and output files.
    pub delimiter: String,
    pub output_dir: PathBuf,
    pub input: InputConfig,
    /// Generates the pings (and POIs, unless given) instead of reading them.
    pub synth: Option<CitySpec>,
    pub stops: StopConfig,
    pub labels: LabelConfig,
    pub panel: PanelConfig,
    pub periods: PeriodConfig,
    pub routines: RoutineConfig,
    pub colocation: ColocStageConfig,
    pub metrics: MetricsConfig,
    pub model: ModelStageConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: 0,
            timezone: "UTC".into(),
            delimiter: ",".into(),
            output_dir: PathBuf::from("output"),
            input: InputConfig::default(),
            synth: None,
            stops: StopConfig::default(),
            labels: LabelConfig::default(),
            panel: PanelConfig::default(),
            periods: PeriodConfig::default(),
            routines: RoutineConfig::default(),
            colocation: ColocStageConfig::default(),
            metrics: MetricsConfig::default(),
            model: ModelStageConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: PipelineConfig = toml::from_str(text)?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::from(e).in_file(path))?;
        let mut cfg = Self::from_toml(&text).map_err(|e| e.in_file(path))?;
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    /// Makes relative input paths relative to `base`.
    pub fn resolve_paths(&mut self, base: &Path) {
        for p in [
            &mut self.input.pings,
            &mut self.input.pois,
            &mut self.input.model_input,
            &mut self.input.taxonomy,
            &mut self.input.essential_shops,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }

    pub fn delimiter_byte(&self) -> Result<u8> {
        io::parse_delimiter(&self.delimiter)
    }

    pub fn clock(&self) -> Result<Clock> {
        Clock::parse(&self.timezone)
    }

    pub fn validate(&self) -> Result<()> {
        self.delimiter_byte()?;
        self.clock()?;
        self.stops.validate()?;
        self.periods.validate()?;
        self.window_config().validate()?;
        if !(self.labels.match_radius_m > 0.0) {
            return Err(Error::config("match radius must be positive"));
        }
        if !(self.colocation.radius_m > 0.0) || self.colocation.min_overlap_s <= 0 {
            return Err(Error::config("co-location radius and overlap must be positive"));
        }
        if self.routines.max_cluster_users < 2 {
            return Err(Error::config("clustering needs at least two users"));
        }
        if !(self.routines.cut_fraction > 0.0 && self.routines.cut_fraction <= 1.0) {
            return Err(Error::config("cut fraction must lie in (0, 1]"));
        }
        if self.routines.enabled && self.routines.shuffles < 2 {
            return Err(Error::config("routine significance needs at least two shuffles"));
        }
        if self.input.pings.is_none() && self.synth.is_none() {
            return Err(Error::config("either input.pings or a [synth] section is required"));
        }
        if let Some(s) = &self.synth {
            s.validate()?;
        }
        self.model.fit.sampler.validate()?;
        Ok(())
    }

    pub fn window_config(&self) -> WindowConfig {
        WindowConfig {
            window_len: self.metrics.window_len,
            shift: self.metrics.shift,
            baseline_start: self.periods.baseline_start,
            baseline_end: self.periods.baseline_end,
            aggregate: self.metrics.aggregate,
        }
    }
}

/// Resolves an output directory: relative paths go under
/// `$MOBILITY_OUTPUT_ROOT` when it is set.
pub fn output_root(dir: &Path) -> PathBuf {
    match std::env::var_os(OUTPUT_ROOT_ENV) {
        Some(root) if dir.is_relative() => PathBuf::from(root).join(dir),
        _ => dir.to_path_buf(),
    }
}

// Panel filtering

/// Distinct local clock hours with at least one ping, per local date.
pub fn coverage_hours(trajectory: &Trajectory, clock: &Clock) -> BTreeMap<NaiveDate, u32> {
    let mut hours: BTreeMap<NaiveDate, BTreeSet<i64>> = BTreeMap::new();
    for p in &trajectory.pings {
        let local = clock.local_secs(p.timestamp);
        hours.entry(clock.date(p.timestamp)).or_default().insert(local.div_euclid(3600));
    }
    hours.into_iter().map(|(d, h)| (d, h.len() as u32)).collect()
}

/// Users with enough observed days before and from the reference date on,
/// and more than `min_hours` of average daily coverage in both periods.
pub fn filter_panel(coverage: &BTreeMap<String, BTreeMap<NaiveDate, u32>>, reference: NaiveDate, cfg: &PanelConfig) -> BTreeSet<String> {
    let (pre_need, post_need) = cfg.thresholds();
    let qualifies = |days: &[u32], need: u32| {
        let n = days.len();
        n > 0 && n as u32 >= need && days.iter().map(|h| *h as f64).sum::<f64>() / n as f64 > cfg.min_hours
    };
    coverage
        .iter()
        .filter(|(_, per_day)| {
            let pre: Vec<u32> = per_day.range(..reference).map(|(_, h)| *h).filter(|h| *h > 0).collect();
            let post: Vec<u32> = per_day.range(reference..).map(|(_, h)| *h).filter(|h| *h > 0).collect();
            qualifies(&pre, pre_need) && qualifies(&post, post_need)
        })
        .map(|(u, _)| u.clone())
        .collect()
}

// Stages

/// Stop locations of every user, in the order of `trajectories`.
pub fn detect_stops(trajectories: &[Trajectory], cfg: &StopConfig) -> Result<Vec<Vec<StopLocation>>> {
    cfg.validate()?;
    trajectories
        .par_iter()
        .map(|t| {
            let events = detect_stop_events_chunked(&t.user_id, &t.pings, cfg)?;
            Ok(if events.is_empty() {
                Vec::new()
            } else {
                cluster_stop_locations(&events, cfg)
            })
        })
        .collect()
}

/// Drops POIs in any excluded first- or second-level category.
pub fn filter_pois(pois: Vec<Poi>, exclude: &[String]) -> Vec<Poi> {
    pois.into_iter()
        .filter(|p| !exclude.iter().any(|c| *c == p.category_l1 || *c == p.category_l2))
        .collect()
}

/// Labelled visits of every user, grouped by user in input order.
pub fn label_all(locations: &[Vec<StopLocation>], pois: &PoiIndex, radius: f64, clock: &Clock) -> Vec<Vec<Visit>> {
    locations.par_iter().map(|l| annotate_user(l, pois, radius, clock)).collect()
}

/// Routines, compression and clustering for one period.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodRoutines {
    pub period: String,
    pub users: Vec<UserRoutines>,
    pub records: Vec<io::RoutineRecord>,
    /// `(user, sequence length, compression ratio)`.
    pub compression: Vec<(String, usize, f64)>,
    /// `(user, cluster)` for users with a sequence.
    pub clusters: Vec<(String, usize)>,
    pub silhouette: Option<f64>,
}

pub fn mine_period(
    visits_by_user: &[Vec<Visit>],
    period: &str,
    (start, end): (NaiveDate, NaiveDate),
    cfg: &RoutineConfig,
    seed: u64,
) -> Result<PeriodRoutines> {
    type Mined = (UserRoutines, Vec<io::RoutineRecord>, (String, usize, f64));
    let mined: Vec<Mined> = visits_by_user
        .par_iter()
        .filter(|v| !v.is_empty())
        .map(|v| -> Result<Option<Mined>> {
            let user = &v[0].user_id;
            let seq = SymbolSequence::from_visits(user, v, start, end);
            if seq.is_empty() {
                return Ok(None);
            }
            let mut alphabet = Alphabet::new();
            let codes = alphabet.encode(&seq.symbols);
            let ratio = compression_ratio(&codes, &sequitur(&codes))?;
            let scores = significant_routines(&codes, cfg.shuffles, user_seed(seed, &format!("{user}/{period}")));
            let records: Vec<io::RoutineRecord> = scores
                .iter()
                .map(|s| io::RoutineRecord {
                    user_id: user.clone(),
                    period: period.to_string(),
                    subsequence: alphabet.decode(&s.pattern),
                    occurrences: s.occurrences,
                    mean: s.mean,
                    std: s.std,
                    z_score: s.z_score,
                })
                .collect();
            let routines = records.iter().map(|r| r.subsequence.clone()).collect();
            let n = seq.len();
            Ok(Some((UserRoutines { sequence: seq, routines }, records, (user.clone(), n, ratio))))
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();

    let mut users = Vec::with_capacity(mined.len());
    let mut records = Vec::new();
    let mut compression = Vec::new();
    for (u, r, c) in mined {
        users.push(u);
        records.extend(r);
        compression.push(c);
    }

    let (mut clusters, mut score) = (Vec::new(), None);
    let mut sample: Vec<&UserRoutines> = users.iter().collect();
    if sample.len() > cfg.max_cluster_users {
        let mut rng = ChaCha8Rng::seed_from_u64(user_seed(seed, &format!("cluster/{period}")));
        let mut idx = rand::seq::index::sample(&mut rng, sample.len(), cfg.max_cluster_users).into_vec();
        idx.sort_unstable();
        sample = idx.into_iter().map(|i| &users[i]).collect();
    }
    if sample.len() >= 2 {
        let sets: Vec<_> = sample.iter().map(|u| u.pairs()).collect();
        let sim = jaccard_matrix(&sets);
        let labels = agglomerative_cluster(&sim)?.cut(cfg.cut_fraction);
        let dist: Vec<Vec<f64>> = sim.iter().map(|r| r.iter().map(|s| 1.0 - s).collect()).collect();
        if labels.iter().collect::<BTreeSet<_>>().len() >= 2 {
            score = Some(silhouette(&labels, &dist)?);
        }
        clusters = sample.iter().zip(labels).map(|(u, l)| (u.sequence.user_id.clone(), l)).collect();
    }
    Ok(PeriodRoutines {
        period: period.to_string(),
        users,
        records,
        compression,
        clusters,
        silhouette: score,
    })
}

/// Daily POI visit counts and durations with their percent change, rolling
/// individual metrics, and daily time allocation.
pub fn compute_metrics(
    visits_by_user: &[Vec<Visit>],
    trajectories: &[Trajectory],
    taxonomy: &Taxonomy,
    cfg: &PipelineConfig,
    clock: &Clock,
) -> Result<Vec<DailySeries>> {
    let (start, end) = (cfg.periods.baseline_start, cfg.periods.analysis_end);
    let cohort = &cfg.metrics.cohort;
    let all: Vec<Visit> = visits_by_user.iter().flatten().cloned().collect();
    if all.is_empty() {
        return Ok(Vec::new());
    }
    let mut out = Vec::new();
    for s in daily_visit_series(&all, taxonomy, cohort, start, end) {
        if s.key.metric == "visits" {
            let pc = percent_change(&s, (cfg.periods.baseline_start, cfg.periods.baseline_end))?;
            out.push(s);
            out.push(pc);
        } else {
            out.push(s);
        }
    }

    let users: Vec<&Vec<Visit>> = visits_by_user.iter().filter(|v| !v.is_empty()).collect();
    let window = cfg.window_config();
    let in_window = |v: &Vec<Visit>, lo: NaiveDate, hi: NaiveDate| -> Vec<Visit> {
        v.iter().filter(|x| x.day >= lo && x.day < hi).cloned().collect()
    };
    type Metric = fn(&crate::metrics::WindowMetrics) -> f64;
    let metrics: [(&str, Metric); 3] = [
        ("unique_stops", |m| m.unique_stops as f64),
        ("entropy", |m| m.entropy),
        ("radius_of_gyration", |m| m.radius_of_gyration),
    ];
    for (name, f) in metrics {
        let (level, change) = rolling_change(
            SeriesKey::new(cohort, name, None),
            &users,
            |v: &&Vec<Visit>, lo, hi| window_metrics(&in_window(v, lo, hi), Weighting::Visits).map(|m| f(&m)),
            &window,
            cfg.periods.analysis_start,
            end,
        )?;
        out.push(level);
        out.push(change);
    }

    // Mean time shares across users with coverage that day.
    let spans: BTreeMap<&str, (i64, i64)> = trajectories
        .iter()
        .filter_map(|t| Some((t.user_id.as_str(), (t.pings.first()?.timestamp, t.pings.last()?.timestamp))))
        .collect();
    let kinds = ["residential", "workplace", "poi", "other", "moving"];
    let mut shares: Vec<DailySeries> = kinds
        .iter()
        .map(|k| DailySeries::new(SeriesKey::new(cohort, "time_share", Some(k))))
        .collect();
    for d in dates(start, end) {
        let (d0, d1) = (clock.day_start(d), clock.day_start(d + Duration::days(1)));
        let mut sums = [0.0; 5];
        let mut n = 0usize;
        for v in &users {
            let Some(&(first, last)) = spans.get(v[0].user_id.as_str()) else { continue };
            let cov = (d0.max(first), d1.min(last));
            if let Some(s) = time_allocation(v, cov) {
                for (k, (_, x)) in s.as_pairs().iter().enumerate() {
                    sums[k] += x;
                }
                n += 1;
            }
        }
        for (k, series) in shares.iter_mut().enumerate() {
            series.values.insert(d, (n > 0).then(|| sums[k] / n as f64));
        }
    }
    out.extend(shares);
    Ok(out)
}

/// Co-location events and the per-POI null-model report.
pub fn colocation_stage(
    visits_by_user: &[Vec<Visit>],
    cfg: &ColocStageConfig,
    clock: &Clock,
) -> Result<(Vec<ColocationEvent>, Vec<NullModelRow>)> {
    let all: Vec<Visit> = visits_by_user.iter().flatten().cloned().collect();
    let events = detect_colocations(&all, &cfg.detection(), clock);
    let report = null_model_report(&all, &events, cfg.min_overlap_s as f64 / 60.0, cfg.duration_formula);
    Ok((events, report))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LooSummary {
    pub loo: f64,
    pub se: f64,
    /// Counts of Pareto k in (-inf, 0.5], (0.5, 0.7], (0.7, 1], (1, inf).
    pub pareto_k_histogram: [usize; 4],
    pub warning: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantSummary {
    pub variant: Variant,
    pub parameters: Vec<ParamSummary>,
    pub r2_mean: f64,
    pub r2_sd: f64,
    pub loo: Option<LooSummary>,
    pub acceptance: Vec<f64>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSummary {
    pub outcome: Outcome,
    pub n_rows: usize,
    pub states: Vec<String>,
    pub data_fingerprint: String,
    pub variants: Vec<VariantSummary>,
    pub comparison: Vec<ComparisonRow>,
}

pub fn summarize_fit(fit: &ModelFit) -> VariantSummary {
    let loo = fit.loo.as_ref().map(|l| {
        let mut h = [0usize; 4];
        for k in &l.pareto_k {
            let bin = if *k <= 0.5 {
                0
            } else if *k <= 0.7 {
                1
            } else if *k <= 1.0 {
                2
            } else {
                3
            };
            h[bin] += 1;
        }
        LooSummary {
            loo: l.loo,
            se: l.se,
            pareto_k_histogram: h,
            warning: l.warning,
        }
    });
    VariantSummary {
        variant: fit.variant,
        parameters: fit.summary.clone(),
        r2_mean: fit.r2.mean,
        r2_sd: fit.r2.sd,
        loo,
        acceptance: fit.acceptance.clone(),
        warnings: fit.warnings.clone(),
    }
}

/// Fits each configured variant and compares them when PSIS-LOO is on.
pub fn model_stage(data: &ModelData, cfg: &ModelStageConfig, seed: u64) -> Result<(Vec<ModelFit>, ModelSummary)> {
    let mut fits = Vec::new();
    for v in &cfg.variants {
        fits.push(fit_model(data, *v, &cfg.fit, seed)?);
    }
    let comparison = if cfg.fit.loo && !fits.is_empty() {
        compare_models(&fits.iter().collect::<Vec<_>>())?
    } else {
        Vec::new()
    };
    let summary = ModelSummary {
        outcome: cfg.outcome,
        n_rows: data.rows.len(),
        states: data.states.clone(),
        data_fingerprint: crate::model::fingerprint(data),
        variants: fits.iter().map(summarize_fit).collect(),
        comparison,
    };
    Ok((fits, summary))
}

// Run

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileEntry {
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

/// Deterministic record of a run: same config and inputs give the same
/// manifest byte for byte. Wall-clock timings go to `timings.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub package: String,
    pub version: String,
    pub seed: u64,
    pub config_sha256: String,
    pub counts: BTreeMap<String, usize>,
    pub silhouette: BTreeMap<String, Option<f64>>,
    pub files: Vec<FileEntry>,
}

pub const MANIFEST_FILE: &str = "manifest.json";
pub const TIMINGS_FILE: &str = "timings.json";

struct Artifacts {
    root: PathBuf,
    files: Vec<String>,
}

impl Artifacts {
    fn write(&mut self, rel: &str, f: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<()> {
        let path = self.root.join(rel);
        let mut w = io::create(&path)?;
        f(&mut w).map_err(|e| e.in_file(&path))?;
        w.flush().map_err(|e| Error::from(e).in_file(&path))?;
        self.files.push(rel.to_string());
        Ok(())
    }

    fn entries(&self) -> Result<Vec<FileEntry>> {
        let mut files = self.files.clone();
        files.sort();
        files
            .into_iter()
            .map(|rel| {
                let path = self.root.join(&rel);
                let bytes = std::fs::read(&path).map_err(|e| Error::from(e).in_file(&path))?;
                Ok(FileEntry {
                    path: rel,
                    bytes: bytes.len() as u64,
                    sha256: hex::encode(Sha256::digest(&bytes)),
                })
            })
            .collect()
    }
}

fn load_taxonomy(cfg: &InputConfig) -> Result<Taxonomy> {
    let mut t = match &cfg.taxonomy {
        Some(p) => Taxonomy::from_csv(io::open(p)?).map_err(|e| e.in_file(p))?,
        None => Taxonomy::builtin(),
    };
    if let Some(p) = &cfg.essential_shops {
        let text = std::fs::read_to_string(p).map_err(|e| Error::from(e).in_file(p))?;
        t = t.with_essential(text.lines().map(str::trim).filter(|l| !l.is_empty()).map(str::to_owned));
    }
    Ok(t)
}

fn write_city(a: &mut Artifacts, city: &SyntheticCity, delim: u8) -> Result<()> {
    a.write("synth/pings.csv", |w| io::write_pings(w, &city.trajectories, delim))?;
    a.write("synth/pois.csv", |w| io::write_pois(w, &city.pois, delim))?;
    a.write("synth/stays.jsonl", |w| io::write_jsonl(w, &city.stays))
}

fn timed<T>(timings: &mut Vec<(String, f64)>, stage: &'static str, f: impl FnOnce() -> Result<T>) -> Result<T> {
    let t = Instant::now();
    let out = f().map_err(|e| e.in_stage(stage))?;
    timings.push((stage.to_string(), t.elapsed().as_secs_f64()));
    Ok(out)
}

/// Runs every stage and writes all artifacts plus the manifest into `out_dir`.
pub fn run_pipeline(cfg: &PipelineConfig, out_dir: &Path) -> Result<Manifest> {
    cfg.validate()?;
    let clock = cfg.clock()?;
    let delim = cfg.delimiter_byte()?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::from(e).in_file(out_dir))?;
    let mut art = Artifacts {
        root: out_dir.to_path_buf(),
        files: Vec::new(),
    };
    let mut timings = Vec::new();
    let mut counts = BTreeMap::new();

    let (trajectories, pois) = timed(&mut timings, "ingest", || {
        let (trajectories, synth_pois) = match (&cfg.input.pings, &cfg.synth) {
            (Some(p), _) => (io::read_pings(io::open(p)?, delim).map_err(|e| e.in_file(p))?, None),
            (None, Some(spec)) => {
                let city = generate_city(spec, cfg.seed)?;
                write_city(&mut art, &city, delim)?;
                (city.trajectories, Some(city.pois))
            }
            (None, None) => unreachable!("validated"),
        };
        let pois = match (&cfg.input.pois, synth_pois) {
            (Some(p), _) => io::read_pois_file(p, delim)?,
            (None, Some(p)) => p,
            (None, None) => Vec::new(),
        };
        Ok((trajectories, filter_pois(pois, &cfg.labels.exclude_categories)))
    })?;
    counts.insert("users_in".to_string(), trajectories.len());
    counts.insert("pings".to_string(), trajectories.iter().map(|t| t.pings.len()).sum());
    counts.insert("pois".to_string(), pois.len());

    let trajectories = timed(&mut timings, "panel", || {
        let Some(reference) = cfg.panel.reference_date else { return Ok(trajectories) };
        let coverage: BTreeMap<String, BTreeMap<NaiveDate, u32>> =
            trajectories.par_iter().map(|t| (t.user_id.clone(), coverage_hours(t, &clock))).collect();
        let keep = filter_panel(&coverage, reference, &cfg.panel);
        Ok(trajectories.into_iter().filter(|t| keep.contains(&t.user_id)).collect::<Vec<_>>())
    })?;
    counts.insert("users_kept".to_string(), trajectories.len());

    let locations = timed(&mut timings, "stops", || detect_stops(&trajectories, &cfg.stops))?;
    let flat_locations: Vec<StopLocation> = locations.iter().flatten().cloned().collect();
    let n_events: usize = flat_locations.iter().map(|l| l.member_events.len()).sum();
    counts.insert("stop_events".to_string(), n_events);
    counts.insert("stop_locations".to_string(), flat_locations.len());
    art.write("stop_events.csv", |w| io::write_stop_events(w, &flat_locations, delim))?;
    art.write("stop_locations.csv", |w| io::write_stop_locations(w, &flat_locations, delim))?;

    let taxonomy = load_taxonomy(&cfg.input)?;
    let visits = timed(&mut timings, "label", || {
        let index = PoiIndex::new(pois.clone());
        let v = label_all(&locations, &index, cfg.labels.match_radius_m, &clock);
        let n: usize = v.iter().map(Vec::len).sum();
        if n != n_events {
            return Err(Error::invalid(format!("{n} visits labelled for {n_events} stop events")));
        }
        Ok(v)
    })?;
    let flat_visits: Vec<Visit> = visits.iter().flatten().cloned().collect();
    counts.insert("visits".to_string(), flat_visits.len());
    art.write("visits.csv", |w| io::write_visits(w, &flat_visits, delim))?;

    let mut silhouettes = BTreeMap::new();
    if cfg.routines.enabled {
        let periods = [
            ("pre", (cfg.periods.baseline_start, cfg.periods.baseline_end)),
            ("during", (cfg.periods.analysis_start, cfg.periods.analysis_end)),
        ];
        let mined = timed(&mut timings, "routines", || {
            periods
                .iter()
                .map(|(name, range)| mine_period(&visits, name, *range, &cfg.routines, cfg.seed))
                .collect::<Result<Vec<_>>>()
        })?;
        let records: Vec<io::RoutineRecord> = mined.iter().flat_map(|m| m.records.clone()).collect();
        counts.insert("routines".to_string(), records.len());
        art.write("routines.jsonl", |w| io::write_jsonl(w, &records))?;
        let edges: Vec<EdgeChange> = edge_changes(&routine_network(&mined[0].users), &routine_network(&mined[1].users));
        counts.insert("network_edges".to_string(), edges.len());
        art.write("network.csv", |w| io::write_network(w, &edges))?;
        #[derive(Serialize)]
        struct Row<'a> {
            period: &'a str,
            user_id: &'a str,
            length: usize,
            compression_ratio: f64,
            cluster: Option<usize>,
        }
        let rows: Vec<Row> = mined
            .iter()
            .flat_map(|m| {
                let cl: BTreeMap<&str, usize> = m.clusters.iter().map(|(u, c)| (u.as_str(), *c)).collect();
                m.compression.iter().map(move |(u, n, r)| Row {
                    period: &m.period,
                    user_id: u,
                    length: *n,
                    compression_ratio: *r,
                    cluster: cl.get(u.as_str()).copied(),
                })
            })
            .collect();
        art.write("user_routines.csv", |w| {
            io::write_records(w, delim, &["period", "user_id", "length", "compression_ratio", "cluster"], &rows)
        })?;
        for m in &mined {
            silhouettes.insert(m.period.clone(), m.silhouette);
        }
    }

    if cfg.colocation.enabled {
        let (events, report) = timed(&mut timings, "coloc", || colocation_stage(&visits, &cfg.colocation, &clock))?;
        counts.insert("colocations".to_string(), events.len());
        art.write("colocations.csv", |w| io::write_colocations(w, &events, delim))?;
        art.write("null_model.csv", |w| io::write_null_model(w, &report))?;
    }

    if cfg.metrics.enabled {
        let series = timed(&mut timings, "metrics", || compute_metrics(&visits, &trajectories, &taxonomy, cfg, &clock))?;
        counts.insert("metric_series".to_string(), series.len());
        art.write("metrics.csv", |w| write_tidy_csv(w, &series))?;
    }

    if let Some(path) = &cfg.input.model_input {
        let (fits, summary) = timed(&mut timings, "model", || {
            let rows = io::read_model_input(io::open(path)?, delim).map_err(|e| e.in_file(path))?;
            let data = ModelData::prepare(&rows, cfg.model.standardize_y)?;
            model_stage(&data, &cfg.model, cfg.seed)
        })?;
        counts.insert("model_rows".to_string(), summary.n_rows);
        for f in &fits {
            art.write(&format!("model/draws_{}.csv", f.variant.name()), |w| io::write_draws(w, f))?;
        }
        art.write("model/summary.json", |w| {
            serde_json::to_writer_pretty(&mut *w, &summary)?;
            Ok(())
        })?;
    }

    let manifest = Manifest {
        package: env!("CARGO_PKG_NAME").to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        seed: cfg.seed,
        config_sha256: hex::encode(Sha256::digest(toml::to_string(cfg).unwrap_or_default().as_bytes())),
        counts,
        silhouette: silhouettes,
        files: art.entries()?,
    };
    let mpath = out_dir.join(MANIFEST_FILE);
    let mut w = io::create(&mpath)?;
    serde_json::to_writer_pretty(&mut w, &manifest)?;
    w.flush()?;
    let tpath = out_dir.join(TIMINGS_FILE);
    let mut w = io::create(&tpath)?;
    let t: BTreeMap<String, f64> = timings.into_iter().collect();
    serde_json::to_writer_pretty(&mut w, &t)?;
    w.flush()?;
    Ok(manifest)
}
