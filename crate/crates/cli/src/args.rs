use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

#[derive(Parser, Debug, Clone, Serialize)]
#[command(name = "randlora", version, about = "Random-basis adapters: budgets, fits, training runs and analyses")]
pub struct Cli {
    /// Master seed for every random draw.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Artifact path. Without it the report goes to stdout.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    pub format: Format,
    /// Worker threads for parallel sections (0 = all cores). Results do not depend on it.
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
}

#[derive(Subcommand, Debug, Clone, Serialize)]
#[serde(tag = "subcommand", rename_all = "kebab-case")]
pub enum Command {
    /// Generate a basis set and write it as a tensor container.
    GenBases(GenBasesArgs),
    /// Trainable-parameter counts for presets or explicit specs.
    Budget(BudgetArgs),
    /// Collinearity probability of sparse ternary rows.
    Collinearity(CollinearityArgs),
    /// Fit one adapter to a target update.
    Fit(FitArgs),
    /// Fit several adapters to several targets.
    Compare(CompareArgs),
    /// Train adapters on a synthetic teacher-student regression task.
    Train(TrainArgs),
    /// Loss over the plane through LoRA, RandLoRA and full fine-tuning solutions.
    Landscape(LandscapeArgs),
    /// Linear CKA between feature matrices or between fine-tuned networks.
    Cka(CkaArgs),
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Dist {
    Uniform,
    Normal,
    Ternary,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct BasisArgs {
    #[arg(long, value_enum, default_value_t = Dist::Normal)]
    pub dist: Dist,
    /// Ternary sparsity parameter; defaults to floor(sqrt(D)).
    #[arg(long)]
    pub sparsity_s: Option<u64>,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct AdapterArgs {
    /// Default rank for specs that do not set `r`.
    #[arg(long, default_value_t = 2)]
    pub rank: usize,
    /// Default term count for specs that do not set `n`.
    #[arg(long)]
    pub n_bases: Option<usize>,
    /// Default scaling constant `c` in `alpha = c / r`.
    #[arg(long)]
    pub alpha_c: Option<f64>,
    /// Also divide alpha by sqrt(n).
    #[arg(long)]
    pub norm_correct: bool,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Opt {
    Adam,
    Sgd,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct OptArgs {
    #[arg(long, value_enum, default_value_t = Opt::Adam)]
    pub optimizer: Opt,
    #[arg(long, default_value_t = 1e-2)]
    pub lr: f64,
    #[arg(long, default_value_t = 5000)]
    pub max_iters: usize,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct GenBasesArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub basis: BasisArgs,
    #[arg(long, default_value_t = 2)]
    pub rank: usize,
    #[arg(long, default_value_t = 4)]
    pub n_bases: usize,
    #[arg(long = "big-d", default_value_t = 64)]
    pub big_d: usize,
    #[arg(long, default_value_t = 64)]
    pub d: usize,
    /// Draw a distinct A per term (needed by the averaged and NoLA-like forms).
    #[arg(long)]
    pub per_term_a: bool,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct BudgetArgs {
    /// Preset name (`vitb32-randlora`) or model prefix (`vitb32`).
    #[arg(long)]
    pub preset: Option<String>,
    /// Explicit specs, e.g. `lora:r=32,randlora:r=6`.
    #[arg(long)]
    pub specs: Option<String>,
    #[arg(long = "big-d", default_value_t = 768)]
    pub big_d: usize,
    #[arg(long, default_value_t = 768)]
    pub d: usize,
    #[command(flatten)]
    #[serde(flatten)]
    pub adapter: AdapterArgs,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct CollinearityArgs {
    /// Sparsity parameter (may be fractional, e.g. sqrt(768)).
    #[arg(long = "s", visible_alias = "sparsity-s")]
    pub s: f64,
    /// Row length.
    #[arg(long)]
    pub d: usize,
    #[arg(long, default_value_t = 1)]
    pub n_bases: usize,
    /// Number of output rows; defaults to `d`.
    #[arg(long = "big-d")]
    pub big_d: Option<usize>,
    /// Also estimate `p` from this many random row pairs (integer `s` only).
    #[arg(long)]
    pub mc_pairs: Option<usize>,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct FitArgs {
    /// `identity:N`, `random:RxC`, `flat:RxC`, `decay:RxC`, or a `.json`/`.csv` matrix file.
    #[arg(long)]
    pub target: String,
    #[arg(long, default_value = "randlora")]
    pub spec: String,
    #[command(flatten)]
    #[serde(flatten)]
    pub basis: BasisArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub adapter: AdapterArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub opt: OptArgs,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct CompareArgs {
    /// Comma-separated targets.
    #[arg(long, value_delimiter = ',', required = true)]
    pub target: Vec<String>,
    #[arg(long, default_value = "lora,randlora")]
    pub specs: String,
    #[command(flatten)]
    #[serde(flatten)]
    pub basis: BasisArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub adapter: AdapterArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub opt: OptArgs,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct TaskArgs {
    #[arg(long = "big-d", default_value_t = 16)]
    pub big_d: usize,
    #[arg(long, default_value_t = 16)]
    pub d: usize,
    /// `flat`, `decay`, `rank:K`, or comma-separated singular values.
    #[arg(long, default_value = "flat")]
    pub spectrum: String,
    #[arg(long, default_value_t = 256)]
    pub samples: usize,
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct TrainArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub task: TaskArgs,
    #[arg(long, default_value = "lora,randlora")]
    pub specs: String,
    #[arg(long, default_value_t = 100)]
    pub log_every: usize,
    #[command(flatten)]
    #[serde(flatten)]
    pub basis: BasisArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub adapter: AdapterArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub opt: OptArgs,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct LandscapeArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub task: TaskArgs,
    #[arg(long, default_value_t = 41)]
    pub resolution: usize,
    #[arg(long, default_value_t = 0.2)]
    pub clamp_pct: f64,
    /// Fraction of training rows the grid is evaluated on.
    #[arg(long, default_value_t = 0.05)]
    pub subset: f64,
    /// Write clamped values to the CSV matrix instead of raw losses.
    #[arg(long)]
    pub clamped: bool,
    #[command(flatten)]
    #[serde(flatten)]
    pub basis: BasisArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub adapter: AdapterArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub opt: OptArgs,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct CkaArgs {
    /// Feature matrix (rows are examples). With `--features-b`, skips training.
    #[arg(long, requires = "features_b")]
    pub features_a: Option<PathBuf>,
    #[arg(long, requires = "features_a")]
    pub features_b: Option<PathBuf>,
    #[arg(long = "big-d", default_value_t = 16)]
    pub big_d: usize,
    #[arg(long, default_value_t = 16)]
    pub hidden: usize,
    #[arg(long, default_value_t = 8)]
    pub d: usize,
    #[arg(long, default_value = "flat")]
    pub spectrum: String,
    #[arg(long, default_value_t = 256)]
    pub samples: usize,
    #[arg(long, default_value = "lora,randlora")]
    pub specs: String,
    #[command(flatten)]
    #[serde(flatten)]
    pub basis: BasisArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub adapter: AdapterArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub opt: OptArgs,
}
