//! `colpo`: the end-to-end pipeline as subcommands.

mod commands;
mod config;

use std::net::SocketAddr;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "colpo", version, about = "Specular reflection inpainting for colposcopic images")]
#[command(after_help = "Any subcommand accepts --config FILE.json whose keys are its long flag names.\n\
Relative paths are resolved under $COLPO_DATA_DIR when it is set.")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic corpus with specular highlights.
    Synth(SynthArgs),
    /// Detect specular reflections and write the real mask.
    Detect(DetectArgs),
    /// Serve the annotation HTTP API (and UI bundle) over a corpus.
    AnnotateServe(ServeArgs),
    /// Resize, re-detect, draw hidden masks and split a corpus.
    BuildDataset(BuildArgs),
    /// Train a single model.
    Train(TrainArgs),
    /// Train one model per seed and select the lowest validation error.
    TrainEnsemble(EnsembleArgs),
    /// Restore one image with a trained model.
    Restore(RestoreArgs),
    /// Evaluate a model on one split of a built dataset.
    Evaluate(EvaluateArgs),
    /// Aggregate per-image evaluation reports into tables.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long)]
    count: usize,
    /// Side length of the square images.
    #[arg(long, default_value_t = 64)]
    size: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct DetectorArgs {
    #[arg(long, default_value_t = 0.85)]
    threshold_factor: f64,
    /// Chebyshev dilation radius of the detected region.
    #[arg(long, default_value_t = 0)]
    dilate: usize,
}

#[derive(Debug, Args)]
struct DetectArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
    #[command(flatten)]
    detector: DetectorArgs,
}

#[derive(Debug, Args)]
struct ServeArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Directory with the built annotation UI, served at `/`.
    #[arg(long)]
    ui_dir: Option<PathBuf>,
    #[arg(long, default_value = "127.0.0.1:8080")]
    addr: SocketAddr,
}

#[derive(Debug, Args)]
struct BuildArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// HiddenRegionPolicy as JSON; its rng_seed is replaced by --seed.
    #[arg(long)]
    policy: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Training resolution (square); omit to keep the corpus size.
    #[arg(long)]
    size: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Split counts; default is the 120/20/22 proportion of the corpus.
    #[arg(long, requires_all = ["val", "test"])]
    train: Option<usize>,
    #[arg(long)]
    val: Option<usize>,
    #[arg(long)]
    test: Option<usize>,
    #[command(flatten)]
    detector: DetectorArgs,
}

#[derive(Debug, Args)]
struct TrainingArgs {
    /// Built dataset manifest.
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 240)]
    epochs: usize,
    #[arg(long, default_value_t = 8)]
    batch_size: usize,
    #[arg(long, default_value_t = 1.0)]
    width_multiplier: f64,
    /// Keep the best validation epoch instead of the last.
    #[arg(long)]
    keep_best: bool,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[command(flatten)]
    common: TrainingArgs,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Args)]
struct EnsembleArgs {
    #[command(flatten)]
    common: TrainingArgs,
    /// Run k uses seed `seed + k - 1`.
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 4)]
    runs: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum RestoreMode {
    Sr,
    Hidden,
}

#[derive(Debug, Args)]
struct RestoreArgs {
    /// Checkpoint, run or ensemble directory.
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_enum)]
    mode: RestoreMode,
    /// Output PNG; a JSON sidecar is written next to it.
    #[arg(long)]
    output: PathBuf,
    /// Real mask; detected from the image when omitted.
    #[arg(long)]
    sr_mask: Option<PathBuf>,
    /// Hidden mask, required in hidden mode.
    #[arg(long)]
    hidden_mask: Option<PathBuf>,
    /// Keep input pixels outside the restored region.
    #[arg(long)]
    composite: bool,
    #[command(flatten)]
    detector: DetectorArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SplitArg {
    Train,
    Val,
    Test,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long, value_enum, default_value_t = SplitArg::Test)]
    split: SplitArg,
    #[arg(long)]
    out: PathBuf,
    /// Also write per-image histogram CSV and plot.
    #[arg(long)]
    histograms: bool,
    /// Upper bounds of the error ranges.
    #[arg(long, value_delimiter = ',', default_values_t = [25u8, 50, 255])]
    ranges: Vec<u8>,
    #[command(flatten)]
    detector: DetectorArgs,
}

#[derive(Debug, Args)]
struct ReportArgs {
    /// Directory of per-image EvalReport JSON files.
    #[arg(long)]
    reports: PathBuf,
    /// ensemble.json to copy alongside the tables.
    #[arg(long)]
    ensemble: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let result = config::expand_config(std::env::args_os().collect()).and_then(|args| {
        let cli = Cli::try_parse_from(args).unwrap_or_else(|e| e.exit());
        commands::run(cli.command)
    });
    if let Err(e) = result {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
