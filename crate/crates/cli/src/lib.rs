//! Command-line pipeline: simulate, preprocess, train-embed, train, detect.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use arca_core::{Error, ErrorKind};

pub mod commands;
pub mod manifest;

pub use commands::{
    cmd_detect, cmd_gradcheck, cmd_preprocess, cmd_simulate, cmd_train, cmd_train_embed, detect_file, load_detector,
    TrainSummary,
};
pub use manifest::{load_config_text, RunManifest};

#[derive(Debug, Parser)]
#[command(name = "arca", version, about = "Alarm-sequence fault classification")]
pub struct Cli {
    /// Repeat for more log output (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a labeled synthetic alarm log.
    Simulate(SimulateArgs),
    /// Suppress repeats, truncate to k alarms and cut windows of v tags.
    Preprocess(PreprocessArgs),
    /// Learn tag embeddings from the sequences behind a windows file.
    TrainEmbed(TrainEmbedArgs),
    /// Train the classifier and report train/validation/test accuracy.
    Train(TrainArgs),
    /// Classify a live alarm stream, one line per full window.
    Detect(DetectArgs),
    /// Compare analytic and finite-difference gradients on a tiny network.
    Gradcheck(GradcheckArgs),
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    /// key=value generator settings (or a manifest to re-run).
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, short)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Args)]
pub struct PreprocessArgs {
    /// Labeled alarm log CSV.
    #[arg(long)]
    pub log: PathBuf,
    #[arg(long, short)]
    pub out: PathBuf,
    /// Alarms kept per occurrence.
    #[arg(long, default_value_t = 20)]
    pub k: usize,
    /// Window length.
    #[arg(long, default_value_t = 5)]
    pub v: usize,
    /// Repeat-suppression window in seconds.
    #[arg(long, default_value_t = 60.0)]
    pub suppress: f64,
}

#[derive(Debug, Clone, Args)]
pub struct TrainEmbedArgs {
    #[arg(long)]
    pub windows: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, short)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub windows: PathBuf,
    #[arg(long)]
    pub embeddings: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Model file to write.
    #[arg(long, short)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Defaults to <out>.history.csv.
    #[arg(long)]
    pub history: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OovArg {
    Skip,
    Halt,
}

#[derive(Debug, Clone, Args)]
pub struct DetectArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub embeddings: PathBuf,
    /// Stream file or named pipe; standard input when omitted or "-".
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = OovArg::Skip)]
    pub oov: OovArg,
    /// Optional repeat-suppression pre-filter, in seconds.
    #[arg(long)]
    pub suppress: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct GradcheckArgs {
    #[arg(long, default_value_t = 1e-4)]
    pub threshold: f64,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
}

pub const EXIT_FAILED_CHECK: i32 = 1;

pub fn exit_code(err: &Error) -> i32 {
    match err.kind() {
        ErrorKind::Config => 2,
        ErrorKind::Data => 3,
        ErrorKind::Numeric => 4,
    }
}

/// Runs a parsed command line and returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    let result = match &cli.command {
        Command::Simulate(a) => cmd_simulate(a).map(|_| 0),
        Command::Preprocess(a) => cmd_preprocess(a).map(|_| 0),
        Command::TrainEmbed(a) => cmd_train_embed(a).map(|_| 0),
        Command::Train(a) => cmd_train(a).map(|s| {
            println!("train_acc {:.4} val_acc {:.4} test_acc {:.4}", s.train_acc, s.val_acc, s.test_acc);
            0
        }),
        Command::Detect(a) => cmd_detect(a, std::io::stdout().lock()).map(|_| 0),
        Command::Gradcheck(a) => cmd_gradcheck(a, std::io::stdout().lock())
            .map(|(pass, _)| if pass { 0 } else { EXIT_FAILED_CHECK }),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
