//! `skewscope` command-line front end.
//!
//! Each subcommand writes a CSV whose first line is
//! `# {"schema": ..., "seed": ..., "config": ...}` and a JSON summary next to
//! it. `--threads` only sizes the worker pool and is not echoed: outputs are
//! identical at any thread count.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

mod commands;
mod error;
pub mod heatmap;
pub mod output;

pub use error::{CliError, CliResult};

use skewscope::analysis::ClassThresholds;
use skewscope::metrics::GiniMode;
use skewscope::workload::{PlacementScheme, PresetClass};
use skewscope::TopologySpec;

#[derive(Debug, Parser)]
#[command(
    name = "skewscope",
    version,
    about = "MoE expert-parallel routing imbalance toolkit"
)]
pub struct Cli {
    /// Worker threads (default: available processors).
    #[arg(long, global = true, value_parser = positive_usize)]
    pub threads: Option<usize>,
    /// Root seed; every random stream is derived from it.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Per-dispatch imbalance metrics of a trace.
    Analyze(AnalyzeArgs),
    /// Write a synthetic trace.
    Generate(GenerateArgs),
    /// Completion-time model over a trace or uniform loads.
    Simulate(SimulateArgs),
    /// Matched-window sweep over expert-parallel degree.
    ScanEp(ScanEpArgs),
    /// Gini against P99 latency over factorial cells.
    Correlate(CorrelateArgs),
    /// Lagged correlation of expert activation vectors.
    Lags(LagsArgs),
    /// Per-layer Gini series.
    DepthProfile(DepthArgs),
    /// Two-class assignment from mock and real Gini.
    Classify(ClassifyArgs),
    /// Cell matrix over labeled traces.
    Factorial(FactorialArgs),
    /// Heatmap and plot data from a cells CSV.
    Report(ReportArgs),
}

fn positive_usize(s: &str) -> Result<usize, String> {
    match s.parse::<usize>() {
        Ok(0) => Err("must be at least 1".into()),
        Ok(v) => Ok(v),
        Err(e) => Err(e.to_string()),
    }
}

fn positive_f64(s: &str) -> Result<f64, String> {
    let v: f64 = s
        .parse()
        .map_err(|e: std::num::ParseFloatError| e.to_string())?;
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(format!("{v} must be positive and finite"))
    }
}

fn nonneg_f64(s: &str) -> Result<f64, String> {
    let v: f64 = s
        .parse()
        .map_err(|e: std::num::ParseFloatError| e.to_string())?;
    if v >= 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(format!("{v} must be non-negative and finite"))
    }
}

fn unit_f64(s: &str) -> Result<f64, String> {
    let v = nonneg_f64(s)?;
    if v <= 1.0 {
        Ok(v)
    } else {
        Err(format!("{v} must lie in [0, 1]"))
    }
}

fn parse_preset(s: &str) -> Result<PresetClass, String> {
    s.parse().map_err(|e: skewscope::Error| e.to_string())
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum GiniModeArg {
    PerStep,
    Pooled,
}

impl From<GiniModeArg> for GiniMode {
    fn from(m: GiniModeArg) -> Self {
        match m {
            GiniModeArg::PerStep => GiniMode::PerStep,
            GiniModeArg::Pooled => GiniMode::Pooled,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum LatencyArg {
    None,
    Measured,
    Simulated,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum PoolingArg {
    AllDispatches,
    PerLayerMean,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum PlacementArg {
    Block,
    RoundRobin,
    Random,
}

impl PlacementArg {
    /// Random placements draw from a stream derived from the root seed.
    pub fn scheme(self, seed: u64) -> PlacementScheme {
        match self {
            PlacementArg::Block => PlacementScheme::Block,
            PlacementArg::RoundRobin => PlacementScheme::RoundRobin,
            PlacementArg::Random => {
                PlacementScheme::Random(skewscope::seed::derive(seed, "cli-placement", &[]))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModeArg {
    Fixed,
    Resampled,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct TopologyArgs {
    #[arg(long, default_value_t = 4, value_parser = positive_usize)]
    pub gpus_per_node: usize,
    /// Intra-node (NVLink) bandwidth per rank, GB/s.
    #[arg(long, default_value_t = 450.0, value_parser = positive_f64)]
    pub bw_intra_gbps: f64,
    /// Inter-node (InfiniBand) bandwidth per rank, GB/s.
    #[arg(long, default_value_t = 25.0, value_parser = positive_f64)]
    pub bw_inter_gbps: f64,
    /// Fixed per-collective latency, microseconds.
    #[arg(long, default_value_t = 20.0, value_parser = nonneg_f64)]
    pub latency_us: f64,
}

impl TopologyArgs {
    pub fn spec(&self, p: usize) -> TopologySpec<f64> {
        TopologySpec {
            p,
            gpus_per_node: self.gpus_per_node,
            bw_intra: self.bw_intra_gbps * 1e9,
            bw_inter: self.bw_inter_gbps * 1e9,
            fixed_latency: self.latency_us * 1e-6,
        }
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ThresholdArgs {
    #[arg(long, default_value_t = 0.20, value_parser = unit_f64)]
    pub resilient_real_max: f64,
    #[arg(long, default_value_t = 2.0, value_parser = positive_f64)]
    pub resilient_ratio_min: f64,
    #[arg(long, default_value_t = 0.24, value_parser = unit_f64)]
    pub persistent_real_min: f64,
    #[arg(long, default_value_t = 1.6, value_parser = positive_f64)]
    pub persistent_ratio_max: f64,
}

impl ThresholdArgs {
    pub fn thresholds(&self) -> ClassThresholds {
        ClassThresholds {
            resilient_real_max: self.resilient_real_max,
            resilient_ratio_min: self.resilient_ratio_min,
            persistent_real_min: self.persistent_real_min,
            persistent_ratio_max: self.persistent_ratio_max,
        }
    }
}

/// Router concentration: a calibrated preset or an explicit alpha.
#[derive(Debug, Clone, Args, Serialize)]
#[group(required = true, multiple = false)]
pub struct RouterChoice {
    #[arg(long, value_parser = parse_preset)]
    pub preset: Option<PresetClass>,
    /// Dirichlet concentration of expert popularity.
    #[arg(long, value_parser = positive_f64)]
    pub alpha: Option<f64>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct AnalyzeArgs {
    #[arg(long)]
    pub trace: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Summary path (default: `<out>.summary.json`).
    #[arg(long)]
    pub summary: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = GiniModeArg::PerStep)]
    pub gini_mode: GiniModeArg,
    #[arg(long, value_enum, default_value_t = LatencyArg::Measured)]
    pub latency: LatencyArg,
    #[command(flatten)]
    pub topology: TopologyArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct GenerateArgs {
    /// Trace path; a `.gz` suffix writes gzip.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub summary: Option<PathBuf>,
    #[command(flatten)]
    pub router: RouterChoice,
    #[arg(long, default_value_t = 128, value_parser = positive_usize)]
    pub experts: usize,
    #[arg(long, default_value_t = 8, value_parser = positive_usize)]
    pub top_k: usize,
    #[arg(long, default_value_t = 16, value_parser = positive_usize)]
    pub ep: usize,
    #[arg(long, default_value_t = 1, value_parser = positive_usize)]
    pub tp: usize,
    /// Global tokens per dispatch (default: seqlen × ep).
    #[arg(long, value_parser = positive_usize)]
    pub tokens_per_step: Option<usize>,
    #[arg(long, default_value_t = 10, value_parser = clap::value_parser!(u64).range(1..))]
    pub steps: u64,
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u32).range(1..))]
    pub layers: u32,
    #[arg(long, value_enum, default_value_t = PlacementArg::Block)]
    pub placement: PlacementArg,
    /// Per-layer concentrations (comma separated); overrides the router alpha.
    #[arg(long, value_delimiter = ',', value_parser = positive_f64)]
    pub layer_alphas: Vec<f64>,
    /// Resample popularity every step, ending at `alpha × ratio`.
    #[arg(long, value_parser = positive_f64)]
    pub drift_ratio: Option<f64>,
    #[arg(long, default_value_t = 200)]
    pub drift_steps: u64,
    /// Disable the preset's own drift schedule.
    #[arg(long)]
    pub no_drift: bool,
    #[arg(long, default_value = "synthetic")]
    pub model: String,
    #[arg(long, default_value = "mock")]
    pub condition: String,
    #[arg(long, default_value_t = 32, value_parser = clap::value_parser!(u64).range(1..))]
    pub gbs: u64,
    #[arg(long, default_value_t = 4096, value_parser = clap::value_parser!(u64).range(1..))]
    pub seqlen: u64,
    #[arg(long, default_value_t = 2048, value_parser = clap::value_parser!(u64).range(1..))]
    pub hidden: u64,
    #[arg(long, default_value_t = 2, value_parser = clap::value_parser!(u64).range(1..))]
    pub bytes_per_elem: u64,
    /// Fill per-rank dispatch latency from the completion-time model.
    #[arg(long)]
    pub timing: bool,
    #[arg(long)]
    pub no_expert_loads: bool,
    #[command(flatten)]
    pub topology: TopologyArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
#[group(id = "source", required = true, multiple = false, args = ["trace", "ep"])]
pub struct SimulateArgs {
    #[arg(long)]
    pub trace: Option<PathBuf>,
    /// Uniform-load regime table over these EP degrees.
    #[arg(long, value_delimiter = ',', value_parser = positive_usize)]
    pub ep: Vec<usize>,
    /// Uniform mode: tokens routed from every rank.
    #[arg(long, default_value_t = 4096, value_parser = clap::value_parser!(u64).range(1..))]
    pub tokens_per_rank: u64,
    #[arg(long, default_value_t = 6, value_parser = clap::value_parser!(u64).range(1..))]
    pub top_k: u64,
    #[arg(long, default_value_t = 2048, value_parser = clap::value_parser!(u64).range(1..))]
    pub hidden: u64,
    #[arg(long, default_value_t = 2, value_parser = clap::value_parser!(u64).range(1..))]
    pub bytes_per_elem: u64,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub summary: Option<PathBuf>,
    #[command(flatten)]
    pub topology: TopologyArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ScanEpArgs {
    #[command(flatten)]
    pub router: RouterChoice,
    #[arg(long, default_value_t = 128, value_parser = positive_usize)]
    pub experts: usize,
    #[arg(long, default_value_t = 8, value_parser = positive_usize)]
    pub top_k: usize,
    #[arg(long, value_delimiter = ',', default_value = "4,8,16,32", value_parser = positive_usize)]
    pub ep: Vec<usize>,
    #[arg(long, default_value_t = 50)]
    pub warmup: u64,
    #[arg(long, default_value_t = 200, value_parser = clap::value_parser!(u64).range(1..))]
    pub measure: u64,
    /// Global tokens per step, identical at every EP degree.
    #[arg(long, default_value_t = 65536, value_parser = positive_usize)]
    pub tokens_per_step: usize,
    #[arg(long, value_enum, default_value_t = ModeArg::Resampled)]
    pub mode: ModeArg,
    #[arg(long, value_enum, default_value_t = PlacementArg::Block)]
    pub placement: PlacementArg,
    #[arg(long)]
    pub no_drift: bool,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub summary: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct CorrelateArgs {
    /// Cells CSV with `architecture`, `condition`, `gini_mean`, `p99_ms`.
    #[arg(long)]
    pub cells: PathBuf,
    #[arg(long, default_value_t = 1000, value_parser = positive_usize)]
    pub permutations: usize,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub summary: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct LagsArgs {
    #[arg(long)]
    pub trace: PathBuf,
    #[arg(long, default_value_t = 20, value_parser = positive_usize)]
    pub max_lag: usize,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub summary: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct DepthArgs {
    #[arg(long)]
    pub trace: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub summary: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ClassifyArgs {
    #[arg(long, value_parser = nonneg_f64, requires = "real", conflicts_with = "cells")]
    pub mock: Option<f64>,
    #[arg(long, value_parser = nonneg_f64, requires = "mock")]
    pub real: Option<f64>,
    /// Classify every architecture in a cells CSV.
    #[arg(long, required_unless_present = "mock")]
    pub cells: Option<PathBuf>,
    #[command(flatten)]
    pub thresholds: ThresholdArgs,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub summary: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct FactorialArgs {
    /// Traces labeled by their `model` and `condition` metadata.
    #[arg(required = true)]
    pub traces: Vec<PathBuf>,
    #[arg(long, value_enum, default_value_t = GiniModeArg::PerStep)]
    pub gini_mode: GiniModeArg,
    #[arg(long, value_enum, default_value_t = LatencyArg::None)]
    pub latency: LatencyArg,
    #[arg(long, value_enum, default_value_t = PoolingArg::AllDispatches)]
    pub pooling: PoolingArg,
    #[command(flatten)]
    pub topology: TopologyArgs,
    #[command(flatten)]
    pub thresholds: ThresholdArgs,
    /// Cells CSV.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub summary: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ReportArgs {
    /// Cells CSV (as written by `factorial`).
    #[arg(long)]
    pub factorial: PathBuf,
    #[arg(long)]
    pub heatmap: PathBuf,
    /// Plot-data CSV (default: `<heatmap>.csv`).
    #[arg(long)]
    pub plot_data: Option<PathBuf>,
    #[arg(long)]
    pub summary: Option<PathBuf>,
    #[command(flatten)]
    pub thresholds: ThresholdArgs,
}

/// Parses `argv` (program name first), runs the subcommand and returns the
/// process exit code. Errors are reported on stderr.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("skewscope: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(cli: Cli) -> CliResult<()> {
    let threads = cli.threads.unwrap_or_else(|| {
        std::thread::available_parallelism()
            .map(|n| n.get())
            .unwrap_or(1)
    });
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::Internal(format!("thread pool: {e}")))?;
    pool.install(|| commands::dispatch(&cli.command, cli.seed))
}
