mod commands;
mod config;
mod dataset;
mod error;
mod plot;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use featleak::features::{DetectorKind, Method};
use featleak::mitigate::PipelineOrder;

use config::{ExperimentConfig, Overrides};
use error::{CliError, CliResult};

#[derive(Parser)]
#[command(name = "featleak", version, about = "Feature inversion attacks, mitigations and privacy/utility metrics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Detect and describe keypoints for every image; writes SFV1 files and a manifest.
    Extract(Common),
    /// Train an inversion model on an image directory.
    Train(TrainArgs),
    /// Reconstruct images from their (optionally mitigated) features.
    Attack(Common),
    /// Apply a mitigation to existing feature files.
    Mitigate(Common),
    /// Privacy and utility for each keypoint budget in the sweep list.
    Sweep(SweepArgs),
    /// SSIM, object recall and matching recall with and without suppression.
    Evaluate(Common),
    /// Summarize report JSON files into one CSV and plot.
    Report(ReportArgs),
}

#[derive(Args, Clone, Default)]
struct Common {
    /// JSON experiment configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    method: Option<Method>,
    #[arg(long)]
    detector: Option<DetectorKind>,
    #[arg(long)]
    max_keypoints: Option<usize>,
    /// none | reduce:N | suppress | reduce+suppress:N
    #[arg(long)]
    mitigation: Option<String>,
    /// cap-then-suppress | suppress-then-cap
    #[arg(long)]
    order: Option<PipelineOrder>,
    /// Box sidecar directory or tagged JSONL file.
    #[arg(long)]
    boxes: Option<PathBuf>,
    /// Pair list file.
    #[arg(long)]
    pairs: Option<PathBuf>,
    #[arg(long)]
    images: Option<PathBuf>,
    #[arg(long)]
    features: Option<PathBuf>,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Clone)]
struct TrainArgs {
    #[command(flatten)]
    common: Common,
    /// Continue from the archive given by --checkpoint.
    #[arg(long)]
    resume: bool,
}

#[derive(Args, Clone)]
struct SweepArgs {
    #[command(flatten)]
    common: Common,
    /// Comma-separated keypoint budgets, e.g. 1000,500,100.
    #[arg(long, value_delimiter = ',')]
    n: Option<Vec<usize>>,
}

#[derive(Args, Clone)]
struct ReportArgs {
    /// Report JSON files written by `sweep` or `evaluate`.
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Common {
    fn resolve(self, sweep: Option<Vec<usize>>) -> CliResult<ExperimentConfig> {
        let base = match &self.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::default(),
        };
        base.resolve(Overrides {
            method: self.method,
            detector: self.detector,
            max_keypoints: self.max_keypoints,
            mitigation: self.mitigation,
            order: self.order,
            boxes: self.boxes,
            pairs: self.pairs,
            images: self.images,
            features: self.features,
            checkpoint: self.checkpoint,
            seed: self.seed,
            out: self.out,
            sweep,
        })
    }
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Extract(c) => commands::extract::run(&c.resolve(None)?),
        Command::Train(t) => commands::train::run(&t.common.resolve(None)?, t.resume),
        Command::Attack(c) => commands::attack::run(&c.resolve(None)?),
        Command::Mitigate(c) => commands::mitigate::run(&c.resolve(None)?),
        Command::Sweep(s) => commands::sweep::run(&s.common.resolve(s.n)?),
        Command::Evaluate(c) => commands::evaluate::run(&c.resolve(None)?),
        Command::Report(r) => commands::report::run(&r.inputs, &r.out.unwrap_or_else(|| PathBuf::from("out"))),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

impl From<anyhow::Error> for CliError {
    fn from(e: anyhow::Error) -> Self {
        CliError::Other(e)
    }
}
