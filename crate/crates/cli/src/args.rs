//! Command-line grammar.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use crowdsense_core::crowd_model::CategoryThresholds;

#[derive(Debug, Parser)]
#[command(
    name = "crowdsense",
    version,
    about = "Bus fullness estimation from rider smartphone sensors"
)]
pub struct Cli {
    /// Seed for every random choice a subcommand makes.
    #[arg(long, global = true, default_value_t = 42)]
    pub seed: u64,

    /// Raise log verbosity (overridden by CROWDSENSE_LOG).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Jsonl,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModelKind {
    Forest,
    Mlp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Merge {
    None,
    Transport,
    BusPosture,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MergeMode {
    Posthoc,
    Retrain,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse sessions, drop short ones, write JSON lines.
    Ingest(IngestArgs),
    /// Hold out a fixed number of sessions per class.
    Split(SplitArgs),
    /// Write the 48-column feature matrix as CSV.
    Features(FeaturesArgs),
    /// Fit a random forest or an MLP on a feature matrix.
    Train(TrainArgs),
    /// Score a model on a feature matrix.
    Eval(EvalArgs),
    /// Render evaluation reports as text confusion matrices.
    Report(ReportArgs),
    /// Check boarding/alighting conservation over vehicle blocks.
    ApcAudit(ApcAuditArgs),
    /// Fit the standing-riders vs seats-taken line.
    CrowdFit(CrowdFitArgs),
    /// Synthetic data and fleet scenarios.
    #[command(subcommand)]
    Simulate(SimulateCommand),
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    #[arg(long, value_enum, default_value_t = Format::Jsonl)]
    pub format: Format,
    #[arg(long, default_value_t = crowdsense_core::data_model::DEFAULT_MIN_SAMPLES)]
    pub min_samples: usize,
    #[arg(long, default_value_t = crowdsense_core::data_model::DEFAULT_MIN_SPAN_MS)]
    pub min_span_ms: u64,
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long)]
    pub test: PathBuf,
    #[arg(long, value_enum, default_value_t = Format::Jsonl)]
    pub format: Format,
    #[arg(long, default_value_t = crowdsense_core::data_model::TABLE1_TEST_PER_CLASS)]
    pub per_class_test: usize,
}

#[derive(Debug, Args)]
pub struct FeaturesArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    #[arg(long, value_enum, default_value_t = Format::Jsonl)]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Feature matrix CSV with labels.
    #[arg(long)]
    pub features: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    #[arg(long, value_enum, default_value_t = ModelKind::Forest)]
    pub model: ModelKind,
    #[arg(long, default_value_t = 100)]
    pub n_trees: usize,
    #[arg(long, default_value_t = 20)]
    pub max_depth: usize,
    /// Features tried per split: `all`, `sqrt`, or a count.
    #[arg(long, default_value = "sqrt")]
    pub feature_subsample: String,
    #[arg(long, default_value_t = 15)]
    pub hidden: usize,
    #[arg(long, default_value_t = 200)]
    pub epochs: usize,
    /// Merge labels before training.
    #[arg(long, value_enum, default_value_t = Merge::None)]
    pub merge: Merge,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Labeled feature matrix CSV.
    #[arg(long)]
    pub features: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    /// `posthoc` needs a 15-class model; `retrain` a model trained with `--merge`.
    #[arg(long, value_enum)]
    pub merge_mode: Option<MergeMode>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Report JSON written by `eval`.
    #[arg(long)]
    pub input: PathBuf,
    /// Defaults to standard output.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ApcAuditArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    /// Full unit-bin histogram as CSV.
    #[arg(long)]
    pub histogram: Option<PathBuf>,
    /// Histogram limited to |error| <= 30.
    #[arg(long)]
    pub cropped: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    pub shards: usize,
}

#[derive(Debug, Args)]
pub struct CrowdFitArgs {
    /// Observations CSV.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum SimulateCommand {
    /// Labeled synthetic sessions.
    Dataset(DatasetArgs),
    /// Synthetic seat and standing-rider observations.
    Observations(ObservationsArgs),
    /// A generated fleet scenario file.
    ScenarioFile(ScenarioFileArgs),
    /// Estimate fullness for every trip of a scenario.
    Run(RunArgs),
    /// Dump the built-in class signal specs.
    WriteSpecs(WriteSpecsArgs),
}

#[derive(Debug, Args)]
pub struct DatasetArgs {
    #[arg(long)]
    pub output: PathBuf,
    #[arg(long, value_enum, default_value_t = Format::Jsonl)]
    pub format: Format,
    /// Sessions per class. Without it, the 3209-session layout is used.
    #[arg(long)]
    pub per_class: Option<usize>,
    #[arg(long)]
    pub spec_file: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ObservationsArgs {
    #[arg(long)]
    pub output: PathBuf,
    #[arg(long, default_value_t = 246)]
    pub n: usize,
    #[arg(long, default_value_t = 0.5)]
    pub standing_noise: f64,
}

#[derive(Debug, Args)]
pub struct ScenarioFileArgs {
    #[arg(long)]
    pub output: PathBuf,
    #[arg(long, default_value_t = 20)]
    pub vehicles: usize,
    #[arg(long, default_value_t = 8)]
    pub riders_min: u32,
    #[arg(long, default_value_t = 30)]
    pub riders_max: u32,
    #[arg(long, default_value_t = 1.0)]
    pub participation: f64,
    #[arg(long, default_value_t = 10)]
    pub off_trip_riders: usize,
    /// Recorded in the scenario, relative to the scenario file.
    #[arg(long)]
    pub spec_file: Option<String>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub scenario: PathBuf,
    #[arg(long)]
    pub model: PathBuf,
    /// Crowd model JSON written by `crowd-fit`.
    #[arg(long)]
    pub crowd: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    /// Overrides the spec file named in the scenario.
    #[arg(long)]
    pub spec_file: Option<PathBuf>,
    #[arg(long, default_value_t = crowdsense_core::fleet_sim::DEFAULT_RADIUS_M)]
    pub radius_m: f64,
    /// few-seats fraction, crowded fraction, crowded standing, very crowded standing.
    #[arg(long, value_parser = parse_thresholds, default_value = "0.5,0.8,3,8")]
    pub thresholds: CategoryThresholds,
}

#[derive(Debug, Args)]
pub struct WriteSpecsArgs {
    #[arg(long)]
    pub output: PathBuf,
}

fn parse_thresholds(s: &str) -> Result<CategoryThresholds, String> {
    s.parse()
        .map_err(|e: crowdsense_core::crowd_model::CrowdError| e.to_string())
}
