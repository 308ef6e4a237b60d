use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

#[derive(Debug, Parser)]
#[command(
    name = "omnipipe",
    version,
    about = "Multimodal input pipeline tools",
    subcommand_required = true,
    arg_required_else_help = true
)]
pub struct Cli {
    /// Seed for every random draw.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// JSON config: {"seed": .., "<subcommand>": {"<flag>": ..}}. Flags win over it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Print the resolved configuration instead of running.
    #[arg(long, global = true)]
    pub dump_config: bool,
    /// Output file, written atomically. Defaults to stdout.
    #[arg(long, short, global = true)]
    pub output: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Plan AnyRes tiles and the token budget of an image.
    Tile(TileArgs),
    /// Plan sampled video frames and their token budget.
    Frames(FramesArgs),
    /// Log-mel features and VAD segments of a 16 kHz mono WAV file.
    Melspec(MelspecArgs),
    /// Finite-difference gradient check of a projector.
    Gradcheck(GradcheckArgs),
    /// Fit Conv-GMLP at several down-sampling rates on the toy task.
    AblateRates(AblateArgs),
    /// Pack a length manifest into fixed-capacity rows.
    Pack(PackArgs),
    /// Replay a streaming event trace through the injection scheduler.
    StreamSim(StreamArgs),
    /// Keep samples whose loss lies within one standard deviation of the mean.
    FilterLoss(FilterLossArgs),
    /// Split texts 1:3 into audio and target parts with timbre ids.
    SplitCrossmodal(SplitArgs),
    /// Allocate a sample budget across datasets by size.
    Mix(MixArgs),
    /// Corpus WER, CER, BLEU or accuracy over reference/hypothesis pairs.
    Metrics(MetricsArgs),
    /// Normalize a benchmark score table for radar plots.
    NormalizeScores(NormalizeArgs),
}

impl Command {
    pub const NAMES: [&'static str; 12] = [
        "tile",
        "frames",
        "melspec",
        "gradcheck",
        "ablate-rates",
        "pack",
        "stream-sim",
        "filter-loss",
        "split-crossmodal",
        "mix",
        "metrics",
        "normalize-scores",
    ];
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct TileArgs {
    #[arg(long, default_value_t = 384)]
    pub width: usize,
    #[arg(long, default_value_t = 384)]
    pub height: usize,
    #[arg(long, default_value_t = 384)]
    pub tile_px: usize,
    #[arg(long, default_value_t = 9)]
    pub max_tiles: usize,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct FramesArgs {
    /// Video duration in seconds.
    #[arg(long, default_value_t = 48.0)]
    pub duration_s: f64,
    /// Number of decoded source frames.
    #[arg(long, default_value_t = 1440)]
    pub total_frames: usize,
    #[arg(long, default_value_t = 384)]
    pub width: usize,
    #[arg(long, default_value_t = 384)]
    pub height: usize,
    #[arg(long, default_value_t = 1.0)]
    pub fps: f64,
    #[arg(long, default_value_t = 48)]
    pub max_frames: usize,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct MelspecArgs {
    /// Input WAV (mono, 16 kHz, 16-bit).
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long, default_value_t = -60.0, allow_hyphen_values = true)]
    pub threshold_db: f64,
    #[arg(long, default_value_t = 5)]
    pub hangover_frames: usize,
    /// Include the full 3000x128 feature grid.
    #[arg(long)]
    pub include_data: bool,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct GradcheckArgs {
    /// mlp, c_abs, concat, mean_pool, conv_gmlp or all.
    #[arg(long, default_value = "conv_gmlp")]
    pub projector: String,
    /// Conv-GMLP down-sampling rate.
    #[arg(long, default_value_t = 4)]
    pub rate: usize,
    /// Conv-GMLP input length.
    #[arg(long, default_value_t = 32)]
    pub len: usize,
    /// Number of consecutive seeds starting at --seed.
    #[arg(long, default_value_t = 10)]
    pub seeds: u64,
    #[arg(long, default_value_t = 1e-5)]
    pub eps: f64,
    #[arg(long, default_value_t = 1e-4)]
    pub tol: f64,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct AblateArgs {
    #[arg(long, value_delimiter = ',', default_values_t = [2, 4, 8])]
    pub rates: Vec<usize>,
    #[arg(long, default_value_t = 4)]
    pub in_channels: usize,
    #[arg(long, default_value_t = 4)]
    pub llm_dim: usize,
    #[arg(long, default_value_t = 200)]
    pub steps: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    /// csv or json.
    #[arg(long, default_value = "csv")]
    pub format: String,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct PackArgs {
    /// JSON lines of {"id": .., "len": ..}.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long, default_value_t = 4096)]
    pub capacity: usize,
    /// first_fit or first_fit_decreasing.
    #[arg(long, default_value = "first_fit")]
    pub policy: String,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct StreamArgs {
    /// JSON lines of {"t": ms, "kind": .., "tokens": ..}.
    #[arg(long)]
    pub events: Option<PathBuf>,
    /// Derive audio events from a WAV file instead.
    #[arg(long)]
    pub audio: Option<PathBuf>,
    /// With --audio: duration of an accompanying video.
    #[arg(long)]
    pub video_duration_s: Option<f64>,
    #[arg(long, default_value_t = 30)]
    pub video_total_frames: usize,
    #[arg(long, default_value_t = 384)]
    pub video_width: usize,
    #[arg(long, default_value_t = 384)]
    pub video_height: usize,
    /// Mel frames per audio_frame event.
    #[arg(long, default_value_t = 10)]
    pub chunk_frames: usize,
    /// Audio projector down-sampling rate.
    #[arg(long, default_value_t = 4)]
    pub rate: usize,
    #[arg(long, default_value_t = -60.0, allow_hyphen_values = true)]
    pub threshold_db: f64,
    #[arg(long, default_value_t = 5)]
    pub hangover_frames: usize,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct FilterLossArgs {
    /// CSV with header id,loss (per-token mean loss).
    #[arg(long)]
    pub losses: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct SplitArgs {
    /// JSON lines of {"text": ..}.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Prompt attached to every sample; defaults to the built-in template.
    #[arg(long)]
    pub prompt: Option<String>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct MixArgs {
    /// name=size, repeatable.
    #[arg(long = "dataset")]
    pub dataset: Vec<String>,
    /// Total samples to draw.
    #[arg(long)]
    pub budget: Option<u64>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct MetricsArgs {
    /// JSON lines of {"ref": .., "hyp": ..}; for bleu "ref" may be a list.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// wer, cer, bleu or accuracy.
    #[arg(long, default_value = "wer")]
    pub metric: String,
    #[arg(long, default_value_t = 4)]
    pub max_n: usize,
    /// none or add_one.
    #[arg(long, default_value = "none")]
    pub smoothing: String,
    /// Also report each pair.
    #[arg(long)]
    pub per_item: bool,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct NormalizeArgs {
    /// CSV with header model,benchmark,score.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// csv or json.
    #[arg(long, default_value = "csv")]
    pub format: String,
}
