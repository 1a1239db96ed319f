//! Command-line front end. Each subcommand maps flags onto library calls.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::error::{Error, Result};
use crate::estimators::{fit, EstimateReport};
use crate::harness::{
    export_csv, export_plot, fit_slope, generate_ground_truth, preset, read_csv, run_sweep,
    run_sweep_with_workers, GroundTruthSpec, PlotOptions, SeriesBy, SweepSpec, XAxis,
    DEFAULT_ALPHA, PRESET_NAMES,
};
use crate::io;
use crate::model::{ARModel, EstimatorConfig, EstimatorKind, InitStrategy, NoiseFamily, NoiseSpec, RangeMode};
use crate::operators::{diagnose, NormOptions, DEFAULT_DENSE_CAP};
use crate::simulator::simulate;
use crate::validation;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_VALIDATION: i32 = 2;

pub const WORKERS_ENV: &str = "ARSYSID_WORKERS";

#[derive(Debug, Parser)]
#[command(name = "arsysid", version, about = "Simulate, fit and diagnose order-p linear autoregressive systems")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate trajectories and write a dataset CSV plus JSON sidecar.
    Simulate(SimulateArgs),
    /// Print diagnostics of a model as JSON.
    Analyze(AnalyzeArgs),
    /// Fit a dataset and print the estimate report as JSON.
    Fit(FitArgs),
    /// Run a parameter sweep and write the result CSV (and optionally an SVG plot).
    Sweep(SweepArgs),
    /// Run the built-in property suites and print a pass/fail table.
    Validate(ValidateArgs),
    /// Render a result CSV as an SVG scaling plot.
    Plot(PlotArgs),
}

/// Where a model comes from: a JSON file, or the scaled-orthogonal recipe.
#[derive(Debug, Args)]
pub struct ModelArgs {
    /// Model JSON with fields p, d, sigma, blocks.
    #[arg(long, conflicts_with_all = ["p", "zero"])]
    pub model: Option<PathBuf>,
    /// Use the all-zero model of size --p, --d.
    #[arg(long, requires_all = ["p", "d"])]
    pub zero: bool,
    /// Context length of a generated truth.
    #[arg(long)]
    pub p: Option<usize>,
    /// State dimension of a generated truth.
    #[arg(long)]
    pub d: Option<usize>,
    #[arg(long, default_value_t = DEFAULT_ALPHA)]
    pub alpha: f64,
    /// Rank of every block of a generated truth.
    #[arg(long)]
    pub rank: Option<usize>,
    /// Seed of a generated truth.
    #[arg(long, default_value_t = 0)]
    pub truth_seed: u64,
    /// Noise scale stored with a generated model.
    #[arg(long, default_value_t = 1.0)]
    pub sigma: f64,
}

impl ModelArgs {
    pub fn load(&self) -> Result<ARModel> {
        if let Some(path) = &self.model {
            return io::read_model(path);
        }
        let (Some(p), Some(d)) = (self.p, self.d) else {
            return Err(Error::invalid("give --model FILE or --p and --d"));
        };
        if self.zero {
            return Ok(ARModel::zeros(p, d, self.sigma));
        }
        generate_ground_truth(&GroundTruthSpec {
            p,
            d,
            alpha: self.alpha,
            rank: self.rank,
            seed: self.truth_seed,
            sigma: self.sigma,
        })
    }
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Number of trajectories.
    #[arg(long = "num-seqs", short = 'n')]
    pub num_seqs: usize,
    /// Trajectory length.
    #[arg(long, short = 't')]
    pub horizon: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "gaussian")]
    pub noise: NoiseFamily,
    /// Noise scale; defaults to the model's sigma.
    #[arg(long = "noise-sigma")]
    pub noise_sigma: Option<f64>,
    /// Dataset CSV; the sidecar is written to `<out>.json`.
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the model JSON here.
    #[arg(long)]
    pub model_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Horizon T of the operators.
    #[arg(long, short = 't', default_value_t = 50)]
    pub horizon: usize,
    /// Fitted context length; fills eta and d_prime when below p.
    #[arg(long)]
    pub p_student: Option<usize>,
    /// Largest T·d handled with a dense SVD.
    #[arg(long, default_value_t = DEFAULT_DENSE_CAP)]
    pub dense_cap: usize,
    #[arg(long, default_value_t = 1e-8)]
    pub tol: f64,
    #[arg(long, default_value_t = 10_000)]
    pub max_iters: usize,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Dataset CSV written by `simulate` (sidecar at `<data>.json`).
    #[arg(long)]
    pub data: PathBuf,
    /// Estimator config JSON; flags below override its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub estimator: Option<EstimatorKind>,
    #[arg(long)]
    pub p_student: Option<usize>,
    /// Budget D on ||M_A||_op.
    #[arg(long = "budget")]
    pub d_budget: Option<f64>,
    #[arg(long)]
    pub rank: Option<usize>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub step: Option<f64>,
    #[arg(long)]
    pub max_iters: Option<usize>,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long, value_parser = parse_range)]
    pub range: Option<RangeMode>,
    /// Project the group-nuclear iterates onto the budget ball.
    #[arg(long)]
    pub project: bool,
    /// Start from scaled orthogonal blocks with this seed.
    #[arg(long)]
    pub init_seed: Option<u64>,
    #[arg(long, default_value_t = 1.0)]
    pub init_alpha: f64,
    /// Truth model JSON for the L(Â) <= L(A*) certificate.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    /// Report JSON path (stdout when absent).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Coefficient CSV path.
    #[arg(long)]
    pub blocks_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// Sweep JSON with SweepSpec field names.
    #[arg(long, conflicts_with = "preset", required_unless_present = "preset")]
    pub config: Option<PathBuf>,
    #[arg(long, value_parser = clap::builder::PossibleValuesParser::new(PRESET_NAMES))]
    pub preset: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
    /// Also render the table as SVG.
    #[arg(long)]
    pub plot: Option<PathBuf>,
    /// Worker threads.
    #[arg(long, env = WORKERS_ENV)]
    pub workers: Option<usize>,
    /// Override the seed list.
    #[arg(long, value_delimiter = ',')]
    pub seeds: Option<Vec<u64>>,
    /// Record wall-clock runtime per cell.
    #[arg(long)]
    pub timing: bool,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    /// Fewer instances per suite.
    #[arg(long)]
    pub quick: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct PlotArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// beta_over_gamma or beta_tilde_over_gamma.
    #[arg(long, default_value = "beta_over_gamma")]
    pub axis: XAxis,
    /// auto, config, p_student or lambda.
    #[arg(long, default_value = "auto")]
    pub series: SeriesBy,
    #[arg(long)]
    pub title: Option<String>,
}

fn parse_range(s: &str) -> std::result::Result<RangeMode, String> {
    match s {
        "full" => Ok(RangeMode::Full),
        "from_p" => Ok(RangeMode::FromP),
        _ => Err(format!("unknown range `{s}` (full, from_p)")),
    }
}

/// Parses `args` (including the program name) and runs the subcommand.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_USAGE
        }
    }
}

fn dispatch(cmd: Command) -> Result<i32> {
    match cmd {
        Command::Simulate(a) => simulate_cmd(a),
        Command::Analyze(a) => analyze_cmd(a),
        Command::Fit(a) => fit_cmd(a),
        Command::Sweep(a) => sweep_cmd(a),
        Command::Validate(a) => validate_cmd(a),
        Command::Plot(a) => plot_cmd(a),
    }
}

fn print_json(value: &impl serde::Serialize) -> Result<()> {
    let mut out = std::io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    Ok(())
}

fn simulate_cmd(a: SimulateArgs) -> Result<i32> {
    let model = a.model.load()?;
    let spec = NoiseSpec::new(a.noise, a.noise_sigma.unwrap_or(model.sigma))?;
    let (ds, _) = simulate(&model, &spec, a.num_seqs, a.horizon, a.seed)?;
    io::write_dataset(&ds, &a.out)?;
    if let Some(path) = &a.model_out {
        io::write_model(&model, path)?;
    }
    Ok(EXIT_OK)
}

fn analyze_cmd(a: AnalyzeArgs) -> Result<i32> {
    let model = a.model.load()?;
    let opts = NormOptions { dense_cap: a.dense_cap, tol: a.tol, max_iters: a.max_iters };
    print_json(&diagnose(&model, a.horizon, a.p_student, &opts)?)?;
    Ok(EXIT_OK)
}

/// Config file values, then flag overrides.
pub fn resolve_fit_config(a: &FitArgs, dim: usize) -> Result<EstimatorConfig> {
    let mut cfg = match &a.config {
        Some(path) => serde_json::from_str::<EstimatorConfig>(&std::fs::read_to_string(path)?)?,
        None => EstimatorConfig::default(),
    };
    if let Some(k) = a.estimator {
        cfg.kind = k;
    }
    if let Some(p) = a.p_student {
        cfg.p_student = p;
    }
    if let Some(v) = a.d_budget {
        cfg.d_budget = v;
    }
    if a.rank.is_some() {
        cfg.r = a.rank;
    }
    if let Some(v) = a.lambda {
        cfg.lambda = v;
    }
    if a.step.is_some() {
        cfg.step_size = a.step;
    }
    if let Some(v) = a.max_iters {
        cfg.max_iters = v;
    }
    if let Some(v) = a.tol {
        cfg.tol = v;
    }
    if let Some(v) = a.range {
        cfg.loss_range = v;
    }
    if a.project {
        cfg.project = true;
    }
    if let Some(seed) = a.init_seed {
        cfg.init = InitStrategy::ScaledOrthogonal { alpha: a.init_alpha, seed };
    }
    cfg.validate(dim)?;
    Ok(cfg)
}

fn fit_cmd(a: FitArgs) -> Result<i32> {
    let ds = io::read_dataset(&a.data)?;
    let cfg = resolve_fit_config(&a, ds.dim)?;
    let mut report: EstimateReport = fit(&ds, &cfg)?;
    if let Some(path) = &a.truth {
        let truth = io::read_model(path)?;
        report.attach_certificates(&ds, cfg.loss_range, Some(&truth), None)?;
    }
    if let Some(path) = &a.blocks_out {
        io::write_blocks(&report.blocks, path)?;
    }
    match &a.out {
        Some(path) => io::write_atomic(path, serde_json::to_string_pretty(&report)?.as_bytes())?,
        None => print_json(&report)?,
    }
    Ok(EXIT_OK)
}

/// Preset or config file, then flag overrides.
pub fn resolve_sweep_spec(config: Option<&Path>, preset_name: Option<&str>, seeds: Option<&[u64]>, timing: bool) -> Result<SweepSpec> {
    let mut spec = match (config, preset_name) {
        (Some(path), _) => serde_json::from_str::<SweepSpec>(&std::fs::read_to_string(path)?)?,
        (None, Some(name)) => preset(name)?,
        (None, None) => return Err(Error::invalid("give --config or --preset")),
    };
    if let Some(s) = seeds {
        spec.seeds = s.to_vec();
    }
    spec.timing |= timing;
    spec.validate()?;
    Ok(spec)
}

fn sweep_cmd(a: SweepArgs) -> Result<i32> {
    let spec = resolve_sweep_spec(a.config.as_deref(), a.preset.as_deref(), a.seeds.as_deref(), a.timing)?;
    let table = match a.workers {
        Some(w) => run_sweep_with_workers(&spec, w)?,
        None => run_sweep(&spec)?,
    };
    export_csv(&table, &a.out)?;
    if let Some(path) = &a.plot {
        export_plot(&table, path, &PlotOptions::default())?;
    }
    let failed = table.raw().filter(|r| r.status.starts_with("error")).count();
    eprintln!("{} records ({} raw, {} failed) written to {}", table.len(), table.raw().count(), failed, a.out.display());
    if let Ok(f) = fit_slope(table.averaged(), XAxis::BetaOverGamma) {
        eprintln!("log-log slope of error vs beta/gamma: {:.3} (R^2 = {:.3})", f.slope, f.r_squared);
    }
    Ok(EXIT_OK)
}

fn validate_cmd(a: ValidateArgs) -> Result<i32> {
    let rows = validation::run_suites(a.quick, a.seed)?;
    print!("{}", validation::format_table(&rows));
    Ok(if rows.iter().all(|r| r.passed) { EXIT_OK } else { EXIT_VALIDATION })
}

fn plot_cmd(a: PlotArgs) -> Result<i32> {
    let table = read_csv(&a.input)?;
    let opts = PlotOptions { x_axis: a.axis, series: a.series, title: a.title, ..Default::default() };
    export_plot(&table, &a.out, &opts)?;
    Ok(EXIT_OK)
}
