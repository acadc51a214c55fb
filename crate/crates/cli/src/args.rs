use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use gisim_core::{DataflowMode, Precision};
use serde::{Deserialize, Serialize};

#[derive(Debug, Parser)]
#[command(
    name = "gisim",
    version,
    about = "Systolic-array training simulator and cost model"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Write the output here instead of stdout.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads for sweeps; never changes the output.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
}

/// Everything that determines an output document. Embedded verbatim in
/// each output so `replay` can reproduce it.
#[derive(Debug, Clone, PartialEq, Subcommand, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    /// Reference training step on seeded inputs.
    Golden(GoldenArgs),
    /// Cycle-stepped layer simulation.
    Sim(SimArgs),
    /// Closed-form cost of a step.
    Estimate(EstimateArgs),
    /// List-schedule a multi-layer training iteration.
    Schedule(ScheduleArgs),
    /// Sweeps and CNN presets.
    #[command(subcommand)]
    Bench(BenchCmd),
    /// All dataflows on one layer, with interleaving savings.
    Compare(CompareArgs),
    /// Re-run the configuration embedded in an earlier output.
    #[serde(skip)]
    Replay { file: PathBuf },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct LayerArgs {
    #[arg(long, default_value_t = 8, value_parser = clap::value_parser!(u64).range(1..))]
    pub n: u64,
    #[arg(long, default_value_t = 8, value_parser = clap::value_parser!(u64).range(1..))]
    pub m: u64,
    #[arg(long, default_value_t = 4, value_parser = clap::value_parser!(u64).range(1..))]
    pub batch: u64,
    #[arg(long, default_value_t = 4, value_parser = clap::value_parser!(u64).range(1..))]
    pub p: u64,
    #[arg(long, default_value_t = 4, value_parser = clap::value_parser!(u64).range(1..))]
    pub q: u64,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct DataArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "int")]
    pub precision: Precision,
    /// Learning rate; defaults to 1 (int) or 0.01 (f64).
    #[arg(long)]
    pub lr: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct GoldenArgs {
    #[command(flatten)]
    pub layer: LayerArgs,
    #[command(flatten)]
    pub data: DataArgs,
    /// Include every matrix, not only digests.
    #[arg(long)]
    pub full: bool,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct SimArgs {
    #[arg(long, default_value = "interleaved")]
    pub mode: DataflowMode,
    #[command(flatten)]
    pub layer: LayerArgs,
    #[command(flatten)]
    pub data: DataArgs,
    /// Also run the reference and fail on any mismatch.
    #[arg(long)]
    pub check: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StepArg {
    Backward,
    Loop,
    Forward,
    Activation,
    BackwardDelta,
    BackwardGradw,
    Update,
    Hadamard,
    FusedBackward,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct EstimateArgs {
    #[arg(long, default_value = "interleaved")]
    pub mode: DataflowMode,
    #[arg(long, value_enum, default_value = "backward")]
    pub step: StepArg,
    #[command(flatten)]
    pub layer: LayerArgs,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct ScheduleArgs {
    /// Layer widths, input first: `1024x5` or `784,256,10`.
    #[arg(long, default_value = "1024x5")]
    pub dims: String,
    #[arg(long, default_value_t = 32, value_parser = clap::value_parser!(u64).range(1..))]
    pub batch: u64,
    #[arg(long, default_value_t = 128, value_parser = clap::value_parser!(u64).range(1..))]
    pub p: u64,
    #[arg(long, default_value_t = 128, value_parser = clap::value_parser!(u64).range(1..))]
    pub q: u64,
    /// Processor count, or a comma list when comparing policies.
    #[arg(long, default_value = "1,2,3")]
    pub procs: String,
    /// One of baseline-ws, baseline-os, baseline-is, proposed. Without it
    /// every policy is compared.
    #[arg(long)]
    pub policy: Option<String>,
    #[arg(long, value_enum, default_value = "json")]
    pub format: Format,
}

#[derive(Debug, Clone, PartialEq, Subcommand, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BenchCmd {
    /// Square or rectangular layer sweep.
    Sweep(SweepArgs),
    /// Fully connected layers of a CNN preset.
    Cnn(CnnArgs),
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct SweepArgs {
    /// Comma list of sizes; `512` is square, `512x256` is N x M.
    #[arg(long, default_value = "128,256,512,1024")]
    pub sizes: String,
    #[arg(long, default_value = "4,16,64")]
    pub batches: String,
    #[arg(long, default_value_t = 128, value_parser = clap::value_parser!(u64).range(1..))]
    pub p: u64,
    #[arg(long, default_value_t = 128, value_parser = clap::value_parser!(u64).range(1..))]
    pub q: u64,
    #[arg(long, default_value = "ws,os,is,interleaved")]
    pub modes: String,
    #[arg(long, default_value = "ws")]
    pub normalize_to: DataflowMode,
    #[arg(long, default_value = "analytic")]
    pub engine: gisim_core::bench::Engine,
    #[arg(long, value_enum, default_value = "csv")]
    pub format: Format,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct CnnArgs {
    #[arg(long, default_value = "alexnet")]
    pub net: String,
    /// Preset file overriding the built-in layer list.
    #[arg(long)]
    pub preset: Option<PathBuf>,
    #[arg(long, default_value_t = 32, value_parser = clap::value_parser!(u64).range(1..))]
    pub batch: u64,
    #[arg(long, default_value_t = 128, value_parser = clap::value_parser!(u64).range(1..))]
    pub p: u64,
    #[arg(long, default_value_t = 128, value_parser = clap::value_parser!(u64).range(1..))]
    pub q: u64,
    #[arg(long, default_value = "analytic")]
    pub engine: gisim_core::bench::Engine,
    #[arg(long, value_enum, default_value = "csv")]
    pub format: Format,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct CompareArgs {
    #[command(flatten)]
    pub layer: LayerArgs,
    #[arg(long, default_value = "analytic")]
    pub engine: gisim_core::bench::Engine,
    #[arg(long, value_enum, default_value = "json")]
    pub format: Format,
}
