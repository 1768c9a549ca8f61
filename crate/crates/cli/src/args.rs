//! Command-line surface.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use gwt_core::models::ModelKind;
use gwt_core::spatial::{CenterOrigin, SpatialKind};
use serde::{Serialize, Serializer};

fn display<T: fmt::Display, S: Serializer>(v: &T, s: S) -> Result<S::Ok, S::Error> {
    s.collect_str(v)
}

/// Comma-separated values given as one flag value.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvList<T>(pub Vec<T>);

impl<T: FromStr> FromStr for CsvList<T>
where
    T::Err: fmt::Display,
{
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        s.split(',')
            .map(str::trim)
            .filter(|p| !p.is_empty())
            .map(|p| p.parse().map_err(|e| format!("{p:?}: {e}")))
            .collect::<Result<Vec<_>, _>>()
            .map(CsvList)
    }
}

impl<T: fmt::Display> fmt::Display for CsvList<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|v| v.to_string()).collect();
        f.write_str(&parts.join(","))
    }
}

impl<T: fmt::Display> Serialize for CsvList<T> {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

#[derive(Debug, Parser)]
#[command(name = "gwt", version, about = "Star-graph spatial layers for spatio-temporal forecasting: checks, training, benchmarks and sweeps")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check the Laplacian spectra of complete graphs and stars and the
    /// n-approximation bound for n = 3..n-max
    SpectralVerify(SpectralArgs),
    /// Compare the factored layer with its materialized rank-1 product and
    /// the sparse star layers with dense materializations
    EquivCheck(EquivArgs),
    /// Finite-difference gradient checks of every spatial layer and both models
    GradCheck(GradArgs),
    /// Train one model and write its curve, metrics and best checkpoint
    Train(TrainArgs),
    /// Time and measure spatial layers over a sweep of node counts
    Bench(BenchArgs),
    /// Test error as the star topology is perturbed
    PerturbSweep(PerturbArgs),
    /// Averaged versus random center-embedding initialization
    InitAblation(AblationArgs),
}

#[derive(Debug, Clone, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct Common {
    /// Directory receiving every output file
    #[arg(long)]
    #[serde(skip)]
    pub out_dir: PathBuf,
    /// Flat `key = value` file of flag values; flags given on the command line win
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// Seed of every random draw
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Args, Serialize)]
#[command(args_override_self = true)]
#[serde(rename_all = "kebab-case")]
pub struct SpectralArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub common: Common,
    /// Largest order checked
    #[arg(long, default_value_t = 64)]
    pub n_max: usize,
    /// Absolute tolerance of every eigenvalue and Loewner check
    #[arg(long, default_value_t = 1e-8)]
    pub tol: f64,
}

#[derive(Debug, Clone, Args, Serialize)]
#[command(args_override_self = true)]
#[serde(rename_all = "kebab-case")]
pub struct EquivArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub common: Common,
    /// Number of nodes
    #[arg(long, default_value_t = 16)]
    pub n: usize,
    /// Random instances per check
    #[arg(long, default_value_t = 50)]
    pub trials: usize,
    /// Largest accepted elementwise deviation
    #[arg(long, default_value_t = 1e-10)]
    pub tol: f64,
}

#[derive(Debug, Clone, Args, Serialize)]
#[command(args_override_self = true)]
#[serde(rename_all = "kebab-case")]
pub struct GradArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub common: Common,
    /// Largest node count of the spatial-layer instances
    #[arg(long, default_value_t = 8)]
    pub n_max: usize,
    /// Seeds per layer kind and model
    #[arg(long, default_value_t = 10)]
    pub trials: u64,
    /// Central-difference step
    #[arg(long, default_value_t = 1e-5)]
    pub eps: f64,
    /// Largest accepted relative error
    #[arg(long, default_value_t = 1e-4)]
    pub tol: f64,
}

/// Data, model and optimizer settings shared by the training commands.
#[derive(Debug, Clone, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct ExperimentArgs {
    /// Wide CSV (`t,node_0,...`) to train on instead of synthetic data
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Synthetic data: number of nodes
    #[arg(long, default_value_t = 64)]
    pub n: usize,
    /// Synthetic data: number of steps
    #[arg(long, default_value_t = 2000)]
    pub t: usize,
    /// Synthetic data: weight of the graph-diffusion term
    #[arg(long, default_value_t = 0.8)]
    pub diffusion_alpha: f64,
    /// Synthetic data: noise standard deviation
    #[arg(long, default_value_t = 0.1)]
    pub noise_sigma: f64,
    /// Synthetic data: seasonal period in steps
    #[arg(long, default_value_t = 24.0)]
    pub season_period: f64,
    /// Input steps per window
    #[arg(long, default_value_t = 12)]
    pub t_in: usize,
    /// Forecast steps per window
    #[arg(long, default_value_t = 12)]
    pub t_out: usize,
    /// Model: agcrn-lite or gwnet-lite
    #[arg(long, default_value = "agcrn-lite")]
    #[serde(serialize_with = "display")]
    pub model: ModelKind,
    /// Hidden width (GRU state or convolution channels)
    #[arg(long, default_value_t = 16)]
    pub hidden: usize,
    /// Node-embedding width
    #[arg(long, default_value_t = 8)]
    pub embed_dim: usize,
    /// Epoch budget
    #[arg(long, default_value_t = 100)]
    pub epochs: usize,
    /// Windows per mini-batch
    #[arg(long, default_value_t = 32)]
    pub batch_size: usize,
    /// Adam learning rate
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    /// Adam first-moment decay
    #[arg(long, default_value_t = 0.9)]
    pub beta1: f64,
    /// Adam second-moment decay
    #[arg(long, default_value_t = 0.999)]
    pub beta2: f64,
    /// Adam denominator offset
    #[arg(long, default_value_t = 1e-8)]
    pub adam_eps: f64,
    /// Epochs without a 1e-4 validation improvement before stopping
    #[arg(long, default_value_t = 10)]
    pub patience: usize,
}

#[derive(Debug, Clone, Args, Serialize)]
#[command(args_override_self = true)]
#[serde(rename_all = "kebab-case")]
pub struct TrainArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub common: Common,
    #[command(flatten)]
    #[serde(flatten)]
    pub exp: ExperimentArgs,
    /// Spatial layer: dense, gwnet, two-layer-star, directed-star or gwt
    #[arg(long, default_value = "gwt")]
    #[serde(serialize_with = "display")]
    pub spatial: SpatialKind,
    /// Center node of the real-center star layers
    #[arg(long, default_value_t = 0)]
    pub center: usize,
    /// Center-embedding initialization of gwt: averaged, random or real:<node>
    #[arg(long, default_value = "averaged")]
    #[serde(serialize_with = "display")]
    pub center_origin: CenterOrigin,
    /// Second weight matrix of the two-layer star
    #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
    pub theta2: bool,
}

#[derive(Debug, Clone, Args, Serialize)]
#[command(args_override_self = true)]
#[serde(rename_all = "kebab-case")]
pub struct BenchArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub common: Common,
    /// Spatial layers to measure
    #[arg(long, default_value = "dense,gwt")]
    pub kinds: CsvList<SpatialKind>,
    /// Node counts
    #[arg(long, default_value = "512,1024,2048,4096,8192")]
    pub ns: CsvList<usize>,
    /// Node-embedding width
    #[arg(long, default_value_t = 16)]
    pub d: usize,
    /// Input feature width
    #[arg(long, default_value_t = 16)]
    pub d_in: usize,
    /// Output feature width
    #[arg(long, default_value_t = 16)]
    pub d_out: usize,
    /// Timed repetitions after two warmup runs
    #[arg(long, default_value_t = 5)]
    pub reps: usize,
    /// Memory budget per measurement in MiB; larger n are skipped
    #[arg(long, default_value_t = 3072)]
    pub budget_mb: u64,
}

#[derive(Debug, Clone, Args, Serialize)]
#[command(args_override_self = true)]
#[serde(rename_all = "kebab-case")]
pub struct PerturbArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub common: Common,
    #[command(flatten)]
    #[serde(flatten)]
    pub exp: ExperimentArgs,
    /// Spatial layer: two-layer-star or directed-star
    #[arg(long, default_value = "two-layer-star")]
    #[serde(serialize_with = "display")]
    pub spatial: SpatialKind,
    /// Center node of the star
    #[arg(long, default_value_t = 0)]
    pub center: usize,
    /// Second weight matrix of the two-layer star
    #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
    pub theta2: bool,
    /// Perturbation ratios in [0, 0.5]
    #[arg(long, default_value = "0,0.1,0.2,0.3,0.4,0.5")]
    pub p_list: CsvList<f64>,
    /// Run seeds (parameters, shuffling and perturbation); --seed fixes the data
    #[arg(long, default_value = "0,1,2")]
    pub seeds: CsvList<u64>,
}

#[derive(Debug, Clone, Args, Serialize)]
#[command(args_override_self = true)]
#[serde(rename_all = "kebab-case")]
pub struct AblationArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub common: Common,
    #[command(flatten)]
    #[serde(flatten)]
    pub exp: ExperimentArgs,
    /// Run seeds (parameters and shuffling); --seed fixes the data
    #[arg(long, default_value = "0,1,2")]
    pub seeds: CsvList<u64>,
}
