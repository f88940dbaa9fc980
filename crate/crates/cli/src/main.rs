//! Batch command-line front end for the detection engine: inference,
//! evaluation, training, grid search, gradient checking, synthetic data
//! generation, and annotated rendering.

mod commands;
mod common;
mod draw;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(
    name = "sungold",
    version,
    about = "Tiny-YOLO detection engine: detect, evaluate, train, and sweep"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run detection over images, one JSON record per image.
    Detect(DetectArgs),
    /// Evaluate a model against a labeled directory.
    Eval(EvalArgs),
    /// Train a model from scratch on a labeled directory.
    Train(TrainArgs),
    /// Run a learning-rate × optimizer grid search.
    Grid(GridArgs),
    /// Verify analytic gradients against finite differences.
    Gradcheck(GradcheckArgs),
    /// Generate a synthetic single-object dataset.
    Synth(SynthArgs),
    /// Burn detection boxes and labels into image copies.
    Render(RenderArgs),
}

#[derive(Args)]
struct DetectArgs {
    /// Model graph description file.
    #[arg(long)]
    cfg: PathBuf,
    /// Binary weights file.
    #[arg(long)]
    weights: PathBuf,
    /// Class-name file, one name per line.
    #[arg(long)]
    classes: PathBuf,
    /// Image file or directory of images.
    #[arg(long)]
    input: PathBuf,
    /// Minimum detection score (objectness × class probability).
    #[arg(long, default_value_t = 0.7)]
    score_thresh: f64,
    /// IoU threshold used for non-maximum suppression.
    #[arg(long, default_value_t = 0.5)]
    iou_thresh: f64,
    /// Output file for the detection records; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Use aspect-preserving letterbox resize instead of the stretch resize.
    #[arg(long)]
    letterbox: bool,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    cfg: PathBuf,
    #[arg(long)]
    weights: PathBuf,
    #[arg(long)]
    classes: PathBuf,
    /// Directory of evaluation images.
    #[arg(long)]
    images: PathBuf,
    /// Directory of matching annotation files.
    #[arg(long)]
    labels: PathBuf,
    #[arg(long, default_value_t = 0.7)]
    score_thresh: f64,
    #[arg(long, default_value_t = 0.5)]
    iou_thresh: f64,
    /// Where to write the JSON evaluation report.
    #[arg(long)]
    report: PathBuf,
    /// Use micro-averaged rates instead of macro-averaged.
    #[arg(long)]
    micro_average: bool,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum OptimizerArg {
    Adam,
    Sgd,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    cfg: PathBuf,
    #[arg(long)]
    images: PathBuf,
    #[arg(long)]
    labels: PathBuf,
    /// Parameter-update rule.
    #[arg(long, value_enum)]
    optimizer: OptimizerArg,
    /// Learning rate.
    #[arg(long)]
    lr: f64,
    /// Number of passes over the training set.
    #[arg(long)]
    epochs: usize,
    /// Mini-batch size.
    #[arg(long)]
    batch: usize,
    /// Seed for initialization and shuffling.
    #[arg(long)]
    seed: u64,
    /// Where to write the trained weights.
    #[arg(long)]
    out_weights: PathBuf,
    /// Where to write the per-epoch loss log (one JSON object per line).
    #[arg(long)]
    loss_log: PathBuf,
}

#[derive(Args)]
struct GridArgs {
    /// Grid specification file (factors, orthogonal settings, thresholds).
    #[arg(long)]
    spec: PathBuf,
    #[arg(long)]
    images: PathBuf,
    #[arg(long)]
    labels: PathBuf,
    /// Output directory for per-cell results and the comparison table.
    #[arg(long)]
    out: PathBuf,
    /// Model graph; defaults to the bundled 32×32 micro graph.
    #[arg(long)]
    cfg: Option<PathBuf>,
}

#[derive(Args)]
struct GradcheckArgs {
    /// Seed for the random draws.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct SynthArgs {
    /// Number of images to generate.
    #[arg(long)]
    n: usize,
    /// Generation seed.
    #[arg(long)]
    seed: u64,
    /// Output directory (images/, labels/, classes.txt).
    #[arg(long)]
    out: PathBuf,
    /// Image side length in pixels.
    #[arg(long, default_value_t = 416)]
    size: usize,
}

#[derive(Args)]
struct RenderArgs {
    /// Detection records produced by `detect`.
    #[arg(long)]
    detections: PathBuf,
    /// Directory holding the original images.
    #[arg(long)]
    images: PathBuf,
    /// Output directory for annotated copies.
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => common::EXIT_USAGE,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Detect(args) => commands::detect::run(args),
        Command::Eval(args) => commands::eval::run(args),
        Command::Train(args) => commands::train::run(args),
        Command::Grid(args) => commands::grid::run(args),
        Command::Gradcheck(args) => commands::gradcheck::run(args),
        Command::Synth(args) => commands::synth::run(args),
        Command::Render(args) => commands::render::run(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}
