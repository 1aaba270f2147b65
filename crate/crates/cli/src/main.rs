//! `lvad`: generate benchmarks, train detectors, run online detection and
//! cross-validated evaluation.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use lvad_core::eval::MethodKind;

#[derive(Parser)]
#[command(name = "lvad", version, about = "LSTM-VAE anomaly detection for multimodal time series")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// More log output (-v debug, -vv trace). RUST_LOG overrides.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    /// Only log errors.
    #[arg(short, long, global = true)]
    quiet: bool,
}

#[derive(Args, Clone, Debug, Default)]
pub struct ConfigArgs {
    /// Run configuration (TOML). Defaults apply to anything it omits.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Override one configuration key, e.g. `--set methods.detector.model.max_epochs=20`.
    /// Repeatable; applied after the file, in order.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic benchmark (execution CSVs plus manifest).
    Generate(GenerateArgs),
    /// Train one method on a dataset's train/val split and write a checkpoint.
    Train(TrainArgs),
    /// Score one execution online; exit 2 if an anomaly is detected.
    Detect(DetectArgs),
    /// Leave-one-group-out cross-validation of several methods.
    Evaluate(EvaluateArgs),
}

#[derive(Args)]
pub struct GenerateArgs {
    #[command(flatten)]
    pub config: ConfigArgs,

    /// Output directory [default: <output>/dataset].
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,

    /// Write into a non-empty directory, replacing files of the same name.
    #[arg(long)]
    pub force: bool,
}

#[derive(Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub config: ConfigArgs,

    /// Dataset directory containing manifest.json.
    #[arg(long, value_name = "DIR")]
    pub dataset: PathBuf,

    #[arg(long, value_parser = parse_method, default_value = "lstm_vae")]
    pub method: MethodKind,

    /// Dataset whose training split is used to pre-train before fine-tuning
    /// (lstm_vae only).
    #[arg(long, value_name = "DIR")]
    pub pretrain: Option<PathBuf>,

    /// Output directory [default: <output>/train-<method>].
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,

    #[arg(long)]
    pub force: bool,
}

#[derive(Args)]
pub struct DetectArgs {
    #[arg(long, value_name = "FILE")]
    pub checkpoint: PathBuf,

    /// Execution CSV to score.
    #[arg(long, value_name = "FILE")]
    pub input: PathBuf,

    /// Sensitivity constant added to the expected score [default: the
    /// largest validation residual stored in the checkpoint].
    #[arg(short, long, allow_negative_numbers = true)]
    pub c: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum LayoutChoice {
    Raw17,
    Features4,
    Both,
}

#[derive(Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub config: ConfigArgs,

    /// Dataset directory [default: generate the configured benchmark in memory].
    #[arg(long, value_name = "DIR")]
    pub dataset: Option<PathBuf>,

    /// Comma-separated methods [default: eval.methods from the config].
    #[arg(long, value_delimiter = ',', value_parser = parse_method)]
    pub methods: Vec<MethodKind>,

    /// Input layout [default: methods.preprocess.layout from the config].
    #[arg(long, value_enum)]
    pub layout: Option<LayoutChoice>,

    /// Output directory [default: <output>/eval].
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,

    #[arg(long)]
    pub force: bool,
}

fn parse_method(s: &str) -> Result<MethodKind, String> {
    s.parse().map_err(|e: lvad_core::Error| e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match (cli.quiet, cli.verbose) {
        (true, _) => "error",
        (false, 0) => "info",
        (false, 1) => "debug",
        _ => "trace",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();

    let result = match cli.command {
        Command::Generate(a) => commands::generate(&a).map(|_| ExitCode::SUCCESS),
        Command::Train(a) => commands::train(&a).map(|_| ExitCode::SUCCESS),
        Command::Detect(a) => commands::detect(&a).map(|anomaly| ExitCode::from(if anomaly { 2 } else { 0 })),
        Command::Evaluate(a) => commands::evaluate(&a).map(|_| ExitCode::SUCCESS),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
