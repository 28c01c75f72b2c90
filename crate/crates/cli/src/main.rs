//! `detkit`: batch post-processing, evaluation, sweeps and spoken-feedback
//! listings for detector outputs.

mod commands;
mod config;
mod external;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use detkit_core::ingest::AugmentOp;
use detkit_core::PostprocessConfig;

use config::{Format, RunConfig};

/// A failed run, split by exit code.
#[derive(Debug)]
pub enum Failure {
    /// Bad input files, arguments or configuration (exit 2).
    Input(anyhow::Error),
    /// Anything else, including unwritable outputs (exit 1).
    Internal(anyhow::Error),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Input(_) => 2,
            Failure::Internal(_) => 1,
        }
    }

    fn error(&self) -> &anyhow::Error {
        match self {
            Failure::Input(e) | Failure::Internal(e) => e,
        }
    }
}

impl From<detkit_core::Error> for Failure {
    fn from(e: detkit_core::Error) -> Self {
        Failure::Input(e.into())
    }
}

#[derive(Parser, Debug)]
#[command(name = "detkit", version, about = "Post-process, evaluate and tune object detector outputs")]
struct Cli {
    /// JSON run configuration; flags take precedence over its values.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Directory for output files [default: config out_dir, then $DETKIT_OUT_DIR, then .]
    #[arg(long, global = true, value_name = "DIR")]
    out_dir: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Score filter, top-k and class-wise NMS over a COCO results file.
    Nms(NmsArgs),
    /// Post-process predictions and score them against ground truth.
    Evaluate(EvaluateArgs),
    /// Grid search over learning rate, batch size and input size.
    Sweep(SweepArgs),
    /// List spoken-feedback utterances for one frame.
    Speak(SpeakArgs),
    /// Re-render a JSON metrics report.
    Report(ReportArgs),
    /// Apply seeded geometric augmentation to a COCO annotation file.
    Augment(AugmentArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Preset {
    /// score 0.01, top-k 1000, NMS IoU 0.8, 200 boxes
    Default,
    /// score 0.01, top-k 10, NMS IoU 0.7, 10 boxes
    TrainingValidation,
}

#[derive(Args, Debug, Default)]
struct PostprocessArgs {
    /// Base settings before individual overrides [default: config, then `default`]
    #[arg(long, value_enum)]
    preset: Option<Preset>,
    #[arg(long)]
    score_threshold: Option<f64>,
    /// Candidates kept per image before NMS.
    #[arg(long)]
    top_k: Option<usize>,
    /// Suppress boxes whose IoU with a kept box exceeds this.
    #[arg(long)]
    nms_iou: Option<f64>,
    /// Detections kept per image after NMS.
    #[arg(long)]
    max_predictions: Option<usize>,
}

impl PostprocessArgs {
    fn resolve(&self, cfg: &RunConfig) -> Result<PostprocessConfig, Failure> {
        let mut pp = match self.preset {
            Some(Preset::Default) => PostprocessConfig::default(),
            Some(Preset::TrainingValidation) => PostprocessConfig::training_validation(),
            None => cfg.postprocess.unwrap_or_default(),
        };
        if let Some(v) = self.score_threshold {
            pp.score_threshold = v;
        }
        if let Some(v) = self.top_k {
            pp.pre_nms_top_k = v;
        }
        if let Some(v) = self.nms_iou {
            pp.nms_iou_threshold = v;
        }
        if let Some(v) = self.max_predictions {
            pp.max_predictions = v;
        }
        pp.validate()?;
        Ok(pp)
    }
}

#[derive(Args, Debug)]
struct NmsArgs {
    /// COCO results JSON array.
    #[arg(long, value_name = "FILE")]
    predictions: Option<PathBuf>,
    /// COCO annotations; when given, category ids are checked against it.
    #[arg(long, value_name = "FILE")]
    annotations: Option<PathBuf>,
    #[command(flatten)]
    postprocess: PostprocessArgs,
    /// Output file [default: <out-dir>/predictions.nms.json]
    #[arg(long, value_name = "FILE")]
    output: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    #[arg(long, value_name = "FILE")]
    annotations: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    predictions: Option<PathBuf>,
    /// Minimum IoU for a true positive [default: 0.50]
    #[arg(long)]
    iou_threshold: Option<f64>,
    #[command(flatten)]
    postprocess: PostprocessArgs,
    /// Also write losses.json over matched pairs.
    #[arg(long)]
    losses: bool,
    #[arg(long)]
    lambda_iou: Option<f64>,
    #[arg(long)]
    lambda_dfl: Option<f64>,
    /// Pixels per distribution bin for DFL targets [default: 8]
    #[arg(long)]
    stride: Option<f64>,
}

#[derive(Args, Debug)]
struct SweepArgs {
    /// Sweep config JSON; overrides the config file's `sweep` section.
    #[arg(long, value_name = "FILE")]
    grid: Option<PathBuf>,
    /// Parallel trials [default: 1]
    #[arg(long)]
    workers: Option<usize>,
    /// Shell command per point; {lr}, {batch}, {h}, {w} are substituted and
    /// the last non-empty stdout line is the score.
    #[arg(long, conflicts_with = "planted")]
    command: Option<String>,
    /// Built-in synthetic evaluator peaking at LR,BATCH,H,W.
    #[arg(long, value_name = "LR,BATCH,H,W")]
    planted: Option<String>,
}

#[derive(Args, Debug)]
struct SpeakArgs {
    #[arg(long, value_name = "FILE")]
    predictions: Option<PathBuf>,
    /// COCO annotations supplying class names.
    #[arg(long, value_name = "FILE")]
    annotations: Option<PathBuf>,
    /// Frame to describe; required when predictions span several images.
    #[arg(long)]
    image_id: Option<u64>,
    /// Utterances per frame [default: 13]
    #[arg(long)]
    max_items: Option<usize>,
    #[command(flatten)]
    postprocess: PostprocessArgs,
    /// Run once per utterance in <out-dir>; {text} and {file} are substituted
    /// shell-quoted.
    #[arg(long, value_name = "TEMPLATE")]
    tts_cmd: Option<String>,
}

#[derive(Args, Debug)]
struct ReportArgs {
    /// report.json written by `evaluate`.
    #[arg(long, value_name = "FILE")]
    input: PathBuf,
    /// [default: config format, then markdown]
    #[arg(long, value_enum)]
    format: Option<Format>,
    /// Write here instead of standard output.
    #[arg(long, value_name = "FILE")]
    output: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct AugmentArgs {
    #[arg(long, value_name = "FILE")]
    annotations: Option<PathBuf>,
    #[arg(long)]
    seed: u64,
    /// Repeatable: flip, rotate90, scale=SX,SY, random-flip=P,
    /// random-rotate90, random-scale=MIN,MAX [default: random-flip=0.5
    /// random-rotate90 random-scale=0.8,1.2]
    #[arg(long = "op", value_parser = parse_op)]
    ops: Vec<AugmentOp>,
    /// Output file [default: <out-dir>/annotations.augmented.json]
    #[arg(long, value_name = "FILE")]
    output: Option<PathBuf>,
}

fn parse_pair(s: &str) -> Result<(f64, f64), String> {
    let (a, b) = s.split_once(',').ok_or_else(|| format!("expected two comma-separated numbers, got {s:?}"))?;
    let num = |v: &str| v.trim().parse::<f64>().map_err(|_| format!("{v:?} is not a number"));
    Ok((num(a)?, num(b)?))
}

fn parse_op(s: &str) -> Result<AugmentOp, String> {
    let (name, arg) = match s.split_once('=') {
        Some((n, a)) => (n, Some(a)),
        None => (s, None),
    };
    let need = || arg.ok_or_else(|| format!("{name} needs a value"));
    match name {
        "flip" => Ok(AugmentOp::FlipHorizontal),
        "rotate90" => Ok(AugmentOp::Rotate90),
        "random-rotate90" => Ok(AugmentOp::RandomRotate90),
        "scale" => parse_pair(need()?).map(|(sx, sy)| AugmentOp::Scale { sx, sy }),
        "random-scale" => parse_pair(need()?).map(|(min, max)| AugmentOp::RandomScale { min, max }),
        "random-flip" => need()?
            .parse::<f64>()
            .map(|p| AugmentOp::RandomFlip { p })
            .map_err(|_| format!("bad probability in {s:?}")),
        _ => Err(format!("unknown op {name:?}")),
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    let config = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    let ctx = commands::Context { out_dir: config.out_dir(cli.out_dir.as_deref()), config };
    match cli.command {
        Command::Nms(a) => commands::nms(&ctx, a),
        Command::Evaluate(a) => commands::evaluate(&ctx, a),
        Command::Sweep(a) => commands::sweep(&ctx, a),
        Command::Speak(a) => commands::speak(&ctx, a),
        Command::Report(a) => commands::report(&ctx, a),
        Command::Augment(a) => commands::augment(&ctx, a),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error());
            ExitCode::from(f.code())
        }
    }
}
