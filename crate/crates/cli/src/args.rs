use std::net::SocketAddr;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

#[derive(Debug, Parser)]
#[command(name = "visbias", version, about = "Estimate visual-bias templates from noise and use them as SVM priors")]
pub struct Cli {
    /// Base seed; every random stream of the run is derived from it.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output file. Standard output when omitted.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    pub format: Format,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a simulated observer on white noise and write its trial log.
    Simulate(SimulateArgs),
    /// Estimate a template from a trial log.
    Estimate(EstimateArgs),
    /// Draw a template as a PNG.
    Render(RenderArgs),
    /// Generate a labeled Gaussian dataset.
    Synth(SynthArgs),
    /// Fit a linear SVM, optionally held inside a cone around a prior.
    Fit(FitArgs),
    /// Average precision of a model or template on labeled data.
    Eval(EvalArgs),
    /// Run a low-data or cross-dataset experiment.
    Experiment(ExperimentArgs),
    /// Run the labeling service.
    Serve(ServeArgs),
}

/// Base images for classic-mode stimuli: `base + noise_scale * noise`.
#[derive(Debug, Args, Serialize)]
pub struct ClassicArgs {
    /// Vector file whose first record is the class A base image.
    #[arg(long, requires = "base_b")]
    pub base_a: Option<PathBuf>,
    #[arg(long, requires = "base_a")]
    pub base_b: Option<PathBuf>,
    #[arg(long, default_value_t = 1.0)]
    pub noise_scale: f64,
}

#[derive(Debug, Args, Serialize)]
pub struct SimulateArgs {
    /// `ext:D`, `raw:WxH`, `hog:CXxCYxO/S` or a space JSON file.
    #[arg(long)]
    pub space: String,
    /// Vector file with the observer's template. A random unit template
    /// derived from the seed when omitted.
    #[arg(long)]
    pub observer_template: Option<PathBuf>,
    /// Also write the observer's (normalized) template here.
    #[arg(long)]
    pub template_out: Option<PathBuf>,
    #[arg(long, default_value_t = 1.0)]
    pub sigma: f64,
    #[arg(long, default_value_t = 0.0)]
    pub tau: f64,
    #[arg(long)]
    pub trials: u64,
    #[arg(long, default_value = "sim")]
    pub observer_id: String,
    #[arg(long)]
    pub cohort: Option<String>,
    /// Make every k-th slot a catch trial.
    #[arg(long)]
    pub catch_every: Option<u64>,
    /// Catch stimuli are `+-amplitude * template` plus noise.
    #[arg(long, default_value_t = 3.0)]
    pub catch_amplitude: f64,
    #[command(flatten)]
    pub classic: ClassicArgs,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModeArg {
    Classic,
    NoiseOnly,
}

#[derive(Debug, Args, Serialize)]
pub struct EstimateArgs {
    #[arg(long)]
    pub log: PathBuf,
    #[arg(long)]
    pub space: String,
    #[arg(long, value_enum, default_value_t = ModeArg::NoiseOnly)]
    pub mode: ModeArg,
    /// Also estimate one noise-only template per `cohort` or `observer_id`.
    #[arg(long, requires = "cohort_dir")]
    pub cohort_key: Option<String>,
    /// Where per-cohort templates go, one `<cohort>.jsonl` each.
    #[arg(long, requires = "cohort_key")]
    pub cohort_dir: Option<PathBuf>,
    #[command(flatten)]
    pub classic: ClassicArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct RenderArgs {
    #[arg(long)]
    pub template: PathBuf,
    #[arg(long)]
    pub space: String,
    /// Pixels per cell (HOG) or per pixel (raw).
    #[arg(long, default_value_t = 8)]
    pub scale: usize,
}

#[derive(Debug, Args, Serialize)]
pub struct SynthArgs {
    /// Full dataset spec as JSON. Overrides the flags below except --seed.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    #[arg(long, default_value_t = 16)]
    pub d: usize,
    /// Distance between the class means, along the first axis.
    #[arg(long, default_value_t = 2.0)]
    pub separation: f64,
    #[arg(long, default_value_t = 1.0)]
    pub sigma: f64,
    #[arg(long, default_value_t = 50)]
    pub n_pos: usize,
    #[arg(long, default_value_t = 50)]
    pub n_neg: usize,
}

#[derive(Debug, Args, Serialize)]
pub struct FitArgs {
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long, default_value_t = 1.0)]
    pub lambda: f64,
    /// Vector file whose first record is the prior direction.
    #[arg(long)]
    pub prior: Option<PathBuf>,
    /// Cone parameter, the cosine of the half-angle. Defaults to cos 30 deg.
    #[arg(long, requires = "prior", conflicts_with = "half_angle_deg")]
    pub theta: Option<f64>,
    #[arg(long, requires = "prior")]
    pub half_angle_deg: Option<f64>,
}

#[derive(Debug, Args, Serialize)]
pub struct EvalArgs {
    /// Model JSON written by `fit`.
    #[arg(long, required_unless_present = "template", conflicts_with = "template")]
    pub model: Option<PathBuf>,
    /// Vector file whose first record is used as a linear scorer.
    #[arg(long)]
    pub template: Option<PathBuf>,
    #[arg(long)]
    pub test: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum RecipeArg {
    LowData,
    CrossDataset,
}

#[derive(Debug, Args, Serialize)]
pub struct ExperimentArgs {
    #[arg(long, value_enum)]
    pub recipe: RecipeArg,
    /// Recipe JSON; missing fields take their defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub addr: SocketAddr,
    #[arg(long)]
    pub data_dir: PathBuf,
    /// Session config to create at startup unless it already exists.
    #[arg(long)]
    pub session_config: Option<PathBuf>,
}
