use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

const PRECEDENCE: &str = "Settings come from three places: a flag on the command line wins over the \
same key in --config-file (TOML), which wins over the built-in default. All randomness derives from \
--seed. Exit codes: 0 success, 1 runtime failure, 2 usage error.";

#[derive(Debug, Parser)]
#[command(name = "nextrate", version, about = "Coarse-to-fine frame-rate generation on a synthetic world", after_help = PRECEDENCE)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample synthetic scenes and write them as a dataset file.
    Dataset(DatasetArgs),
    /// Run training stage 1 (full rate) or stage 2 (mixed rates).
    Train(TrainArgs),
    /// Generate a sequence coarse to fine from a checkpoint.
    Generate(GenerateArgs),
    /// Multiply-add counts of a generation plan.
    Flops(FlopsArgs),
    /// Compare a generated sequence with its scene's ground truth.
    Eval(EvalArgs),
    /// Run the built-in verification suites.
    Verify(VerifyArgs),
}

#[derive(Debug, Clone, Args, Default)]
pub struct ModelFlags {
    #[arg(long)]
    pub width: Option<usize>,
    #[arg(long)]
    pub layers: Option<usize>,
    #[arg(long)]
    pub heads: Option<usize>,
    /// Longest window the model accepts.
    #[arg(long)]
    pub max_t: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct DatasetArgs {
    #[arg(long)]
    pub scenes: Option<usize>,
    /// Fraction of scenes with shot changes.
    #[arg(long)]
    pub multi_shot: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Full-rate frames per scene.
    #[arg(long)]
    pub duration: Option<usize>,
    /// Store each scene rendered at full rate next to its parameters.
    #[arg(long)]
    pub embed: bool,
    /// Also write this many held-out single-shot scenes as JSON.
    #[arg(long, default_value_t = 0)]
    pub held_out: usize,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub config_file: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..=2))]
    pub stage: u32,
    /// Dataset file written by `dataset`.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Stage-1 checkpoint to start stage 2 from.
    #[arg(long)]
    pub init: Option<PathBuf>,
    /// Checkpoint of an unfinished run of the same stage.
    #[arg(long)]
    pub resume: Option<PathBuf>,
    #[arg(long)]
    pub steps: Option<u64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub warmup: Option<u64>,
    /// Frames per training clip.
    #[arg(long)]
    pub window: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Write a checkpoint every this many updates (0: only at the end).
    #[arg(long)]
    pub checkpoint_every: Option<u64>,
    #[command(flatten)]
    pub model: ModelFlags,
    #[arg(long)]
    pub config_file: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct GenerateArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Plan string such as f(6,12,24)m(1,2,4), optionally with s(...) steps.
    #[arg(long)]
    pub config: Option<String>,
    /// Full-rate frames to generate (the new window when continuing).
    #[arg(long)]
    pub frames: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
    /// Scene JSON whose prompt conditions the generation.
    #[arg(long)]
    pub scene: Option<PathBuf>,
    /// .tmv whose first frame becomes frame 0.
    #[arg(long, conflicts_with_all = ["first_last", "continue_from"])]
    pub image: Option<PathBuf>,
    /// .tmv whose first and last frames become the first and last frames.
    #[arg(long, conflicts_with = "continue_from")]
    pub first_last: Option<PathBuf>,
    /// .tmv to extend; its last --overlap frames condition the new window.
    #[arg(long = "continue", requires = "overlap")]
    pub continue_from: Option<PathBuf>,
    #[arg(long)]
    pub overlap: Option<usize>,
    /// Also write every stage's level sequence.
    #[arg(long, conflicts_with = "continue_from")]
    pub emit_stages: bool,
    /// Sample with the raw weights instead of the EMA.
    #[arg(long)]
    pub raw_weights: bool,
    #[arg(long)]
    pub config_file: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct FlopsArgs {
    #[arg(long)]
    pub config: String,
    #[arg(long)]
    pub frames: usize,
    /// Take model dimensions from a checkpoint instead of flags.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[command(flatten)]
    pub model: ModelFlags,
    /// Also write the CSV here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub scene: PathBuf,
    /// Coarser-level .tmv files to check for anchor agreement.
    #[arg(long = "stage-file")]
    pub stage_files: Vec<PathBuf>,
    /// Directory for eval.json and a manifest.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct VerifyArgs {
    /// all, gradcheck, rope, subsampling, anchor or cost.
    #[arg(long, default_value = "all")]
    pub suite: String,
    /// Directory for verify.json.
    #[arg(long)]
    pub out: Option<PathBuf>,
}
