//! Command-line front end shared by the `ssclust` binary and its tests.
//!
//! Exit codes: 0 on success, 2 for usage or config-schema errors, 1 for
//! errors raised while running a method (reported as JSON on stderr).

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use nalgebra::DMatrix;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::analysis::{figure_preset, figure_sweep, FixedParams, SweepAxis};
use crate::error::Error;
use crate::gaussian::CovModel;
use crate::io::load_dataset;
use crate::metrics::{line_difference_test, TestOutcome};
use crate::rng::derive_seed;
use crate::select::{model_search, CandidateRecord, Penalty, SearchOptions};
use crate::sim::{onion_correlation, penalty_sweep_experiment, sample_mixture, MixtureSpec, SweepConfig};
use crate::ssem::{map_labels, FitOptions};

pub const SEED_ENV: &str = "SSCLUST_SEED";

#[derive(Debug, Parser)]
#[command(name = "ssclust", version, about = "Semi-supervised Gaussian mixture clustering")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// JSON config; flags given on the command line take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed (falls back to the config, then $SSCLUST_SEED, then 0).
    #[arg(long)]
    seed: Option<u64>,
    /// Directory that receives the outputs and a `config.json` echo.
    #[arg(long)]
    out_dir: PathBuf,
    /// Worker threads.
    #[arg(long, default_value_t = 1)]
    threads: usize,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit every candidate and select with BIC*.
    Cluster(ClusterArgs),
    /// Penalty sweep on the simulated three-component mixture.
    SweepPenalty(SweepArgs),
    /// Misselection probabilities for nested Gaussian-mean models.
    AnalyticProbs(AnalyticArgs),
    /// Draw from the three-component mixture or a custom spec.
    Simulate(SimulateArgs),
    /// Permutation test for a difference in cluster membership between two lines.
    HellingerTest(HellingerArgs),
}

#[derive(Debug, Args)]
struct ClusterArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    label_column: Option<String>,
    /// Columns that are neither features nor labels.
    #[arg(long, value_delimiter = ',')]
    ignore: Option<Vec<String>>,
    #[arg(long)]
    g_min: Option<usize>,
    #[arg(long)]
    g_max: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    models: Option<Vec<CovModel>>,
    /// `n1`, `n`, or a number.
    #[arg(long)]
    penalty: Option<Penalty>,
    #[arg(long)]
    restarts: Option<usize>,
    #[arg(long)]
    max_iter: Option<usize>,
    #[arg(long)]
    rel_tol: Option<f64>,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    n_s: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    n_u: Option<Vec<usize>>,
    #[arg(long)]
    m_grid_size: Option<usize>,
    #[arg(long)]
    replicates: Option<usize>,
    #[arg(long)]
    g_min: Option<usize>,
    #[arg(long)]
    g_max: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    models: Option<Vec<CovModel>>,
    #[arg(long)]
    restarts: Option<usize>,
    #[arg(long, value_delimiter = ',', num_args = 3)]
    weights: Option<Vec<f64>>,
    /// Unlabeled sizes 5, 10, ..., 640 instead of the desk-scale list.
    #[arg(long)]
    paper_scale: bool,
}

#[derive(Debug, Args)]
struct AnalyticArgs {
    #[command(flatten)]
    common: Common,
    /// Preset axis and fixed values (1, 2 or 3).
    #[arg(long)]
    figure: Option<u8>,
    #[arg(long)]
    axis: Option<SweepAxis>,
    #[arg(long, value_delimiter = ',')]
    grid: Option<Vec<u64>>,
    #[arg(long)]
    d: Option<usize>,
    #[arg(long)]
    d0: Option<usize>,
    #[arg(long)]
    n: Option<u64>,
    #[arg(long)]
    gap: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    m: Option<Vec<f64>>,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long, value_delimiter = ',', num_args = 3)]
    weights: Option<Vec<f64>>,
    /// Number of rows that keep their label.
    #[arg(long)]
    n_labeled: Option<usize>,
    /// 1-based components whose rows may be labeled.
    #[arg(long, value_delimiter = ',')]
    labeled_components: Option<Vec<usize>>,
}

#[derive(Debug, Args)]
struct HellingerArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    cluster_column: Option<String>,
    #[arg(long)]
    line_column: Option<String>,
    #[arg(long)]
    permutations: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClusterConfig {
    pub input: Option<PathBuf>,
    pub label_column: Option<String>,
    pub ignore_columns: Vec<String>,
    pub g_range: Vec<usize>,
    pub models: Vec<CovModel>,
    pub penalty: Penalty,
    pub restarts: usize,
    pub seed: u64,
    pub fit: FitOptions,
    pub extra_penalties: Vec<f64>,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        let s = SearchOptions::default();
        ClusterConfig {
            input: None,
            label_column: None,
            ignore_columns: Vec::new(),
            g_range: s.g_range,
            models: s.models,
            penalty: s.penalty,
            restarts: s.restarts,
            seed: s.seed,
            fit: s.fit,
            extra_penalties: s.extra_penalties,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalyticConfig {
    pub figure: Option<u8>,
    pub axis: Option<SweepAxis>,
    pub grid: Vec<u64>,
    pub fixed: FixedParams,
    pub m: Vec<f64>,
    pub seed: u64,
}

impl Default for AnalyticConfig {
    fn default() -> Self {
        AnalyticConfig {
            figure: None,
            axis: None,
            grid: Vec::new(),
            fixed: FixedParams::default(),
            m: vec![std::f64::consts::E * std::f64::consts::E, 10.0, 50.0, 100.0],
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateConfig {
    pub n: usize,
    pub weights: [f64; 3],
    /// Replaces the built-in three-component mixture when present.
    pub spec: Option<MixtureSpec>,
    pub n_labeled: usize,
    pub labeled_components: Vec<usize>,
    pub seed: u64,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        SimulateConfig {
            n: 300,
            weights: [1.0 / 3.0; 3],
            spec: None,
            n_labeled: 0,
            labeled_components: vec![1, 2],
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HellingerConfig {
    pub input: Option<PathBuf>,
    pub cluster_column: String,
    pub line_column: String,
    pub permutations: usize,
    pub seed: u64,
}

impl Default for HellingerConfig {
    fn default() -> Self {
        HellingerConfig {
            input: None,
            cluster_column: "cluster".into(),
            line_column: "line".into(),
            permutations: 999,
            seed: 0,
        }
    }
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Runtime(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Runtime(e)
    }
}

type Outputs = Vec<(&'static str, Vec<u8>)>;

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            2
        }
        Err(Failure::Runtime(e)) => {
            let report = serde_json::json!({ "error": e.kind(), "message": e.to_string() });
            eprintln!("{report}");
            1
        }
    }
}

fn dispatch(command: Command) -> Result<(), Failure> {
    match command {
        Command::Cluster(a) => {
            let cfg = cluster_config(&a)?;
            execute(&a.common, &cfg, || run_cluster(&cfg))
        }
        Command::SweepPenalty(a) => {
            let cfg = sweep_config(&a)?;
            execute(&a.common, &cfg, || run_sweep(&cfg))
        }
        Command::AnalyticProbs(a) => {
            let cfg = analytic_config(&a)?;
            execute(&a.common, &cfg, || run_analytic(&cfg))
        }
        Command::Simulate(a) => {
            let cfg = simulate_config(&a)?;
            execute(&a.common, &cfg, || run_simulate(&cfg))
        }
        Command::HellingerTest(a) => {
            let cfg = hellinger_config(&a)?;
            execute(&a.common, &cfg, || run_hellinger(&cfg))
        }
    }
}

/// Runs `work` on a pool of the requested size and writes its outputs plus
/// the resolved config. Nothing is written when `work` fails.
fn execute<C: Serialize>(
    common: &Common,
    cfg: &C,
    work: impl FnOnce() -> Result<Outputs, Failure> + Send,
) -> Result<(), Failure> {
    if common.threads == 0 {
        return Err(Failure::Usage("--threads must be at least 1".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(common.threads)
        .build()
        .map_err(|e| Failure::Runtime(Error::InvalidInput(e.to_string())))?;
    let outputs = pool.install(work)?;
    fs::create_dir_all(&common.out_dir).map_err(Error::from)?;
    let mut echo = serde_json::to_vec_pretty(cfg).map_err(Error::from)?;
    echo.push(b'\n');
    fs::write(common.out_dir.join("config.json"), echo).map_err(Error::from)?;
    for (name, bytes) in outputs {
        fs::write(common.out_dir.join(name), bytes).map_err(Error::from)?;
    }
    Ok(())
}

/// Reads the config file (if any) and reports whether it set a seed.
fn load_config<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<(T, bool), Failure> {
    let Some(path) = path else {
        return Ok((T::default(), false));
    };
    let text = fs::read_to_string(path).map_err(|e| Failure::Usage(format!("cannot read {}: {e}", path.display())))?;
    let value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
    let has_seed = value.get("seed").is_some();
    let cfg = serde_json::from_value(value).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
    Ok((cfg, has_seed))
}

fn resolve_seed(common: &Common, from_config: Option<u64>) -> Result<u64, Failure> {
    if let Some(s) = common.seed.or(from_config) {
        return Ok(s);
    }
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| Failure::Usage(format!("{SEED_ENV}={v:?} is not an unsigned integer"))),
        Err(_) => Ok(0),
    }
}

fn g_range(current: &[usize], g_min: Option<usize>, g_max: Option<usize>) -> Result<Vec<usize>, Failure> {
    if g_min.is_none() && g_max.is_none() {
        return Ok(current.to_vec());
    }
    let lo = g_min.or_else(|| current.iter().copied().min()).unwrap_or(1);
    let hi = g_max.or_else(|| current.iter().copied().max()).unwrap_or(lo);
    if lo == 0 || lo > hi {
        return Err(Failure::Usage(format!("invalid G range {lo}..={hi}")));
    }
    Ok((lo..=hi).collect())
}

fn three_weights(w: Vec<f64>) -> Result<[f64; 3], Failure> {
    w.try_into().map_err(|_| Failure::Usage("--weights takes exactly three values".into()))
}

fn cluster_config(a: &ClusterArgs) -> Result<ClusterConfig, Failure> {
    let (mut c, has_seed): (ClusterConfig, _) = load_config(a.common.config.as_deref())?;
    c.seed = resolve_seed(&a.common, has_seed.then_some(c.seed))?;
    if let Some(v) = &a.input {
        c.input = Some(v.clone());
    }
    if let Some(v) = &a.label_column {
        c.label_column = Some(v.clone());
    }
    if let Some(v) = &a.ignore {
        c.ignore_columns = v.clone();
    }
    c.g_range = g_range(&c.g_range, a.g_min, a.g_max)?;
    if let Some(v) = &a.models {
        c.models = v.clone();
    }
    if let Some(v) = a.penalty {
        c.penalty = v;
    }
    if let Some(v) = a.restarts {
        c.restarts = v;
    }
    if let Some(v) = a.max_iter {
        c.fit.max_iter = v;
    }
    if let Some(v) = a.rel_tol {
        c.fit.rel_tol = v;
    }
    if c.input.is_none() {
        return Err(Failure::Usage("cluster needs --input or `input` in the config".into()));
    }
    if c.g_range.is_empty() || c.models.is_empty() {
        return Err(Failure::Usage("empty G range or model list".into()));
    }
    Ok(c)
}

#[derive(Serialize)]
struct ClusterReport<'a> {
    selected: SelectedModel,
    m: f64,
    n: usize,
    n1: usize,
    feature_names: &'a [String],
    class_names: &'a [String],
    candidates: Vec<CandidateRecord>,
}

#[derive(Serialize)]
struct SelectedModel {
    g: usize,
    model: CovModel,
    loglik: f64,
    d: usize,
    criterion: f64,
    converged: bool,
    iterations: usize,
    weights: Vec<f64>,
}

fn run_cluster(cfg: &ClusterConfig) -> Result<Outputs, Failure> {
    let input = cfg.input.as_deref().expect("checked during resolution");
    let loaded = load_dataset(input, cfg.label_column.as_deref(), &cfg.ignore_columns)?;
    let data = &loaded.dataset;
    let opts = SearchOptions {
        g_range: cfg.g_range.clone(),
        models: cfg.models.clone(),
        penalty: cfg.penalty,
        restarts: cfg.restarts,
        seed: cfg.seed,
        fit: cfg.fit,
        extra_penalties: cfg.extra_penalties.clone(),
    };
    // Fail fast on an undefined penalty before fitting anything.
    opts.penalty.resolve(data.n(), data.n_unlabeled())?;
    let outcome = model_search(data, &opts)?;
    let best = outcome.best_score();
    let fit = outcome.best_fit();

    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["row".to_string(), "component".to_string()];
    header.extend((1..=best.g).map(|k| format!("resp_{k}")));
    w.write_record(&header).map_err(Error::from)?;
    for (i, k) in map_labels(&fit.resp).into_iter().enumerate() {
        let mut rec = vec![(i + 1).to_string(), (k + 1).to_string()];
        rec.extend((0..best.g).map(|j| format!("{:?}", fit.resp[(i, j)])));
        w.write_record(&rec).map_err(Error::from)?;
    }
    let assignments = w.into_inner().map_err(|e| Error::from(e.into_error()))?;

    let report = ClusterReport {
        selected: SelectedModel {
            g: best.g,
            model: best.model,
            loglik: best.loglik,
            d: best.d,
            criterion: best.criterion(outcome.m),
            converged: fit.converged,
            iterations: fit.iterations,
            weights: fit.params.weights.clone(),
        },
        m: outcome.m,
        n: data.n(),
        n1: data.n_unlabeled(),
        feature_names: &loaded.feature_names,
        class_names: &loaded.class_names,
        candidates: outcome.records(),
    };
    let mut scores = serde_json::to_vec_pretty(&report).map_err(Error::from)?;
    scores.push(b'\n');
    Ok(vec![("assignments.csv", assignments), ("scores.json", scores)])
}

fn sweep_config(a: &SweepArgs) -> Result<SweepConfig, Failure> {
    let (mut c, has_seed): (SweepConfig, _) = load_config(a.common.config.as_deref())?;
    c.seed = resolve_seed(&a.common, has_seed.then_some(c.seed))?;
    if a.paper_scale {
        c.n_u_list = (0..8).map(|i| 5 << i).collect();
    }
    if let Some(v) = a.n_s {
        c.n_s = v;
    }
    if let Some(v) = &a.n_u {
        c.n_u_list = v.clone();
    }
    if let Some(v) = a.m_grid_size {
        c.m_grid_size = v;
    }
    if let Some(v) = a.replicates {
        c.replicates = v;
    }
    c.g_range = g_range(&c.g_range, a.g_min, a.g_max)?;
    if let Some(v) = &a.models {
        c.models = v.clone();
    }
    if let Some(v) = a.restarts {
        c.restarts = v;
    }
    if let Some(v) = &a.weights {
        c.weights = three_weights(v.clone())?;
    }
    Ok(c)
}

#[derive(Serialize)]
struct SweepSummary<'a> {
    rows: usize,
    failed_candidates: usize,
    failures: &'a [crate::sim::SweepFailure],
}

fn run_sweep(cfg: &SweepConfig) -> Result<Outputs, Failure> {
    let table = penalty_sweep_experiment(cfg)?;
    let mut csv_bytes = Vec::new();
    table.write_csv(&mut csv_bytes)?;
    let summary = SweepSummary {
        rows: table.rows.len(),
        failed_candidates: table.failed_candidates,
        failures: &table.failures,
    };
    let mut json = serde_json::to_vec_pretty(&summary).map_err(Error::from)?;
    json.push(b'\n');
    Ok(vec![("sweep.csv", csv_bytes), ("sweep_summary.json", json)])
}

/// Grid used when a preset is chosen without an explicit grid.
fn preset_grid(axis: SweepAxis) -> Vec<u64> {
    match axis {
        SweepAxis::N => (1..=40).map(|i| 250 * i).collect(),
        SweepAxis::D => (1..=20).map(|i| 10 * i).collect(),
        SweepAxis::D0 => (0..20).map(|i| 10 * i).collect(),
    }
}

fn analytic_config(a: &AnalyticArgs) -> Result<AnalyticConfig, Failure> {
    let (mut c, has_seed): (AnalyticConfig, _) = load_config(a.common.config.as_deref())?;
    c.seed = resolve_seed(&a.common, has_seed.then_some(c.seed))?;
    if let Some(v) = a.figure {
        c.figure = Some(v);
    }
    if let Some(v) = a.axis {
        c.axis = Some(v);
    }
    if let Some(v) = &a.grid {
        c.grid = v.clone();
    }
    for (slot, flag) in [(&mut c.fixed.d, a.d), (&mut c.fixed.d0, a.d0), (&mut c.fixed.gap, a.gap)] {
        if flag.is_some() {
            *slot = flag;
        }
    }
    if a.n.is_some() {
        c.fixed.n = a.n;
    }
    if let Some(v) = &a.m {
        c.m = v.clone();
    }
    if let Some(fig) = c.figure {
        let (axis, preset) = figure_preset(fig).map_err(|e| Failure::Usage(e.to_string()))?;
        if c.axis.is_some_and(|ax| ax != axis) {
            return Err(Failure::Usage(format!("figure {fig} sweeps {}", axis.as_str())));
        }
        c.axis = Some(axis);
        c.fixed.d = c.fixed.d.or(preset.d);
        c.fixed.d0 = c.fixed.d0.or(preset.d0);
        c.fixed.n = c.fixed.n.or(preset.n);
        c.fixed.gap = c.fixed.gap.or(preset.gap);
    }
    let Some(axis) = c.axis else {
        return Err(Failure::Usage("analytic-probs needs --figure or --axis".into()));
    };
    if c.grid.is_empty() {
        c.grid = preset_grid(axis);
    }
    if c.m.is_empty() {
        return Err(Failure::Usage("empty m list".into()));
    }
    Ok(c)
}

fn run_analytic(cfg: &AnalyticConfig) -> Result<Outputs, Failure> {
    let axis = cfg.axis.expect("resolved");
    let table = figure_sweep(axis, &cfg.grid, &cfg.fixed, &cfg.m)?;
    let mut csv_bytes = Vec::new();
    table.write_csv(&mut csv_bytes)?;
    let mut skipped = serde_json::to_vec_pretty(&table.skipped).map_err(Error::from)?;
    skipped.push(b'\n');
    Ok(vec![("probs.csv", csv_bytes), ("skipped.json", skipped)])
}

const SIGMA3_TAG: u64 = 0x5167;
const SAMPLE_TAG: u64 = 0x5a3d;

fn simulate_config(a: &SimulateArgs) -> Result<SimulateConfig, Failure> {
    let (mut c, has_seed): (SimulateConfig, _) = load_config(a.common.config.as_deref())?;
    c.seed = resolve_seed(&a.common, has_seed.then_some(c.seed))?;
    if let Some(v) = a.n {
        c.n = v;
    }
    if let Some(v) = &a.weights {
        c.weights = three_weights(v.clone())?;
    }
    if let Some(v) = a.n_labeled {
        c.n_labeled = v;
    }
    if let Some(v) = &a.labeled_components {
        c.labeled_components = v.clone();
    }
    if c.labeled_components.contains(&0) {
        return Err(Failure::Usage("labeled components are numbered from 1".into()));
    }
    Ok(c)
}

/// The mixture and draws behind the `simulate` command.
pub fn simulate(cfg: &SimulateConfig) -> crate::Result<(MixtureSpec, DMatrix<f64>, Vec<usize>)> {
    let spec = match &cfg.spec {
        Some(s) => s.clone(),
        None => {
            let sigma3 = onion_correlation(2, derive_seed(cfg.seed, &[SIGMA3_TAG]))? / 6.0;
            MixtureSpec::three_component(cfg.weights, sigma3)?
        }
    };
    if let Some(&k) = cfg.labeled_components.iter().find(|&&k| k > spec.g()) {
        return Err(Error::InvalidInput(format!("labeled component {k} exceeds G = {}", spec.g())));
    }
    let (x, truth) = sample_mixture(&spec, cfg.n, derive_seed(cfg.seed, &[SAMPLE_TAG]))?;
    Ok((spec, x, truth))
}

fn run_simulate(cfg: &SimulateConfig) -> Result<Outputs, Failure> {
    let (spec, x, truth) = simulate(cfg)?;

    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<String> = (1..=spec.dim()).map(|j| format!("x{j}")).collect();
    header.extend(["label".to_string(), "true_component".to_string()]);
    w.write_record(&header).map_err(Error::from)?;
    let mut labeled = 0;
    for (i, &k) in truth.iter().enumerate() {
        let mut rec: Vec<String> = (0..spec.dim()).map(|j| format!("{:.16e}", x[(i, j)])).collect();
        let label = if labeled < cfg.n_labeled && cfg.labeled_components.contains(&(k + 1)) {
            labeled += 1;
            (k + 1).to_string()
        } else {
            String::new()
        };
        rec.push(label);
        rec.push((k + 1).to_string());
        w.write_record(&rec).map_err(Error::from)?;
    }
    let data = w.into_inner().map_err(|e| Error::from(e.into_error()))?;
    let mut spec_json = serde_json::to_vec_pretty(&spec).map_err(Error::from)?;
    spec_json.push(b'\n');
    Ok(vec![("simulated.csv", data), ("spec.json", spec_json)])
}

fn hellinger_config(a: &HellingerArgs) -> Result<HellingerConfig, Failure> {
    let (mut c, has_seed): (HellingerConfig, _) = load_config(a.common.config.as_deref())?;
    c.seed = resolve_seed(&a.common, has_seed.then_some(c.seed))?;
    if let Some(v) = &a.input {
        c.input = Some(v.clone());
    }
    if let Some(v) = &a.cluster_column {
        c.cluster_column = v.clone();
    }
    if let Some(v) = &a.line_column {
        c.line_column = v.clone();
    }
    if let Some(v) = a.permutations {
        c.permutations = v;
    }
    if c.input.is_none() {
        return Err(Failure::Usage("hellinger-test needs --input or `input` in the config".into()));
    }
    Ok(c)
}

#[derive(Serialize)]
struct HellingerReport<'a> {
    lines: &'a [String],
    clusters: &'a [String],
    #[serde(flatten)]
    outcome: TestOutcome,
}

fn intern(values: &mut Vec<String>, v: &str) -> usize {
    match values.iter().position(|x| x == v) {
        Some(i) => i,
        None => {
            values.push(v.to_string());
            values.len() - 1
        }
    }
}

fn run_hellinger(cfg: &HellingerConfig) -> Result<Outputs, Failure> {
    let input = cfg.input.as_deref().expect("checked during resolution");
    let mut reader = csv::Reader::from_path(input).map_err(Error::from)?;
    let headers = reader.headers().map_err(Error::from)?.clone();
    let column = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::InvalidInput(format!("column `{name}` not found")))
    };
    let (ci, li) = (column(&cfg.cluster_column)?, column(&cfg.line_column)?);
    let mut cluster_names = Vec::new();
    let mut line_names = Vec::new();
    let mut assignments = Vec::new();
    let mut lines = Vec::new();
    for (row, rec) in reader.records().enumerate() {
        let rec = rec.map_err(Error::from)?;
        let cell = |j: usize, name: &str| {
            let v = rec.get(j).unwrap_or("").trim();
            if v.is_empty() {
                Err(Error::Parse {
                    row: row + 1,
                    column: name.to_string(),
                    message: "empty cell".into(),
                })
            } else {
                Ok(v)
            }
        };
        assignments.push(intern(&mut cluster_names, cell(ci, &cfg.cluster_column)?));
        lines.push(intern(&mut line_names, cell(li, &cfg.line_column)?));
    }
    if line_names.len() != 2 {
        return Err(Error::InvalidInput(format!("expected exactly two lines, found {}", line_names.len())).into());
    }
    let outcome = line_difference_test(&assignments, &lines, cfg.permutations, cfg.seed)?;
    let report = HellingerReport {
        lines: &line_names,
        clusters: &cluster_names,
        outcome,
    };
    let mut json = serde_json::to_vec_pretty(&report).map_err(Error::from)?;
    json.push(b'\n');
    Ok(vec![("test.json", json)])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn g_range_overrides() {
        assert_eq!(g_range(&[1, 2, 3], None, None).unwrap(), vec![1, 2, 3]);
        assert_eq!(g_range(&[1, 2, 3], Some(2), None).unwrap(), vec![2, 3]);
        assert_eq!(g_range(&[1, 2, 3], None, Some(5)).unwrap(), vec![1, 2, 3, 4, 5]);
        assert!(g_range(&[1], Some(3), Some(2)).is_err());
        assert!(g_range(&[1], Some(0), Some(2)).is_err());
    }

    #[test]
    fn parses_every_subcommand() {
        for cmd in ["cluster", "sweep-penalty", "analytic-probs", "simulate", "hellinger-test"] {
            assert!(Cli::try_parse_from(["ssclust", cmd, "--out-dir", "x"]).is_ok(), "{cmd}");
        }
        assert!(Cli::try_parse_from(["ssclust", "cluster", "--out-dir", "x", "--bogus"]).is_err());
        assert!(Cli::try_parse_from(["ssclust", "cluster", "--out-dir", "x", "--models", "EII,XYZ"]).is_err());
    }

    #[test]
    fn figure_preset_resolution() {
        let cli = Cli::try_parse_from(["ssclust", "analytic-probs", "--out-dir", "x", "--figure", "2"]).unwrap();
        let Command::AnalyticProbs(a) = cli.command else { unreachable!() };
        let c = analytic_config(&a).unwrap();
        assert_eq!(c.axis, Some(SweepAxis::D));
        assert_eq!(c.fixed.n, Some(1000));
        assert_eq!(c.fixed.gap, Some(10));
        assert_eq!(c.grid.len(), 20);
    }
}
