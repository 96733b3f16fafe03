use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;
mod config;
mod error;
mod setup;

use config::PipelineArgs;

/// Semantic gaze classification and attention analytics for egocentric
/// eye-tracking sessions.
#[derive(Debug, Parser)]
#[command(name = "egogaze", version)]
struct Cli {
    /// Versioned TOML pipeline configuration; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Validate a gaze log, frames and annotations; optionally normalize them.
    Ingest(IngestArgs),
    /// Stratified train/val split of `video,frame` pairs.
    Split(SplitArgs),
    /// Detect the gaze marker in every frame and write a gaze log.
    Locate(LocateArgs),
    /// Grow an object mask from each gaze point and write PBM masks.
    Segment(SessionArgs),
    /// Classify every frame of a session.
    Classify(SessionArgs),
    /// Build few-shot caches from labelled frames.
    Adapt(AdaptArgs),
    /// Train linear probes on frame embeddings.
    TrainProbe(TrainProbeArgs),
    /// Score predictions against ground truth.
    Evaluate(EvaluateArgs),
    /// Print attention analytics for a predicted timeline.
    Analyze(AnalyzeArgs),
    /// Measure pipeline throughput.
    Bench(BenchArgs),
    /// Write a synthetic session with known ground truth.
    Synth(SynthArgs),
    /// Write analytics tables and charts to a directory.
    Report(AnalyzeArgs),
}

#[derive(Debug, Args)]
struct IngestArgs {
    #[arg(long)]
    gaze: PathBuf,
    #[arg(long)]
    frames: Option<PathBuf>,
    #[arg(long)]
    annotations: Option<PathBuf>,
    /// Frame size when no frame directory is given.
    #[arg(long, requires = "height")]
    width: Option<u32>,
    #[arg(long, requires = "width")]
    height: Option<u32>,
    #[arg(long)]
    taxonomy: Option<PathBuf>,
    /// Directory for the normalized gaze log and annotations.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SplitArgs {
    /// CSV of `video,frame` rows.
    #[arg(long)]
    list: PathBuf,
    #[arg(long, default_value_t = 0.8)]
    ratio: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct LocateArgs {
    #[arg(long)]
    frames: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = egogaze::analytics::DEFAULT_FPS)]
    fps: f64,
}

#[derive(Debug, Args)]
struct SessionArgs {
    #[arg(long)]
    frames: PathBuf,
    /// Gaze log; without it the marker is located in each frame.
    #[arg(long)]
    gaze: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "session")]
    session_id: String,
    #[command(flatten)]
    pipeline: PipelineArgs,
}

#[derive(Debug, Args)]
struct LabelledSessionArgs {
    #[arg(long)]
    frames: PathBuf,
    #[arg(long)]
    gaze: Option<PathBuf>,
    /// Annotations (`frame,labels,annotator`) or a timeline (`frame,label`).
    #[arg(long)]
    labels: PathBuf,
    /// Restrict to the training frames of this video in a split manifest.
    #[arg(long, requires = "video")]
    split: Option<PathBuf>,
    #[arg(long)]
    video: Option<String>,
    #[command(flatten)]
    pipeline: PipelineArgs,
}

#[derive(Debug, Args)]
struct AdaptArgs {
    #[command(flatten)]
    session: LabelledSessionArgs,
    #[arg(long, default_value_t = 16)]
    shots: usize,
    /// Cache built from crop embeddings.
    #[arg(long)]
    out: PathBuf,
    /// Cache built from mask embeddings.
    #[arg(long)]
    mask_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct TrainProbeArgs {
    #[command(flatten)]
    session: LabelledSessionArgs,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    mask_out: Option<PathBuf>,
    /// Sigmoid head trained on every annotated label.
    #[arg(long)]
    multi_label: bool,
    #[arg(long, default_value_t = 100)]
    epochs: usize,
    #[arg(long, default_value_t = 0.1)]
    lr: f64,
    #[arg(long, default_value_t = 0.9)]
    momentum: f64,
    #[arg(long, default_value_t = 1e-4)]
    weight_decay: f64,
    #[arg(long, value_delimiter = ',')]
    milestones: Vec<usize>,
    #[arg(long, default_value_t = 0.1)]
    gamma: f64,
    #[arg(long, default_value_t = 32)]
    batch_size: usize,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    /// Per-frame scores written by `classify`.
    #[arg(long)]
    scores: Option<PathBuf>,
    /// Ground truth: annotations or a timeline.
    #[arg(long)]
    truth: PathBuf,
    /// Second annotator for Cohen's kappa against `--truth`.
    #[arg(long)]
    rater2: Option<PathBuf>,
    #[arg(long, default_value_t = 0.5)]
    threshold: f64,
    /// Macro- instead of micro-averaged F1.
    #[arg(long)]
    macro_f1: bool,
    #[arg(long)]
    taxonomy: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct AnalyzeArgs {
    /// Predicted timeline (`frame,label`).
    #[arg(long)]
    pred: PathBuf,
    /// Ground truth: annotations or a timeline.
    #[arg(long)]
    truth: Option<PathBuf>,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// Count only changes of class in the transition matrix.
    #[arg(long)]
    collapse_runs: bool,
    #[arg(long, default_value_t = egogaze::analytics::DEFAULT_FPS)]
    fps: f64,
    /// `metric,value` table to include in the report.
    #[arg(long)]
    metrics: Option<PathBuf>,
    #[arg(long)]
    taxonomy: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct BenchArgs {
    /// Frames to replay; synthetic 1080p frames when absent.
    #[arg(long)]
    frames: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_value = "1,8")]
    batch_size: Vec<usize>,
    #[arg(long, default_value_t = 10)]
    reps: usize,
    #[arg(long, default_value_t = 10)]
    warmup: usize,
    #[arg(long, default_value_t = 50)]
    frames_per_rep: usize,
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    pipeline: PipelineArgs,
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 500)]
    frames: usize,
    #[arg(long, default_value_t = 1920)]
    width: u32,
    #[arg(long, default_value_t = 1080)]
    height: u32,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Maximum per-channel noise amplitude.
    #[arg(long, default_value_t = 0)]
    noise: u8,
    #[arg(long)]
    no_dot: bool,
    #[arg(long, default_value_t = 3)]
    dot_radius: u32,
    #[arg(long, default_value_t = egogaze::analytics::DEFAULT_FPS)]
    fps: f64,
    /// Write frames as 24-bit BMP instead of PPM.
    #[arg(long)]
    bmp: bool,
}

pub fn log(level: &str, frame: Option<u64>, message: &str) {
    let frame = frame.map(|f| f.to_string()).unwrap_or_default();
    eprintln!("{level},{frame},{}", message.replace('\n', " "));
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log("error", None, &e.to_string());
            e.exit_code()
        }
    }
}
