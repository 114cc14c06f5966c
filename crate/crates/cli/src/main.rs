mod commands;
mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use texdcn::dcn::CentroidUpdateMode;

/// Texture-pattern discovery with a convolutional deep clustering network.
#[derive(Debug, Parser)]
#[command(name = "texdcn", version)]
pub struct Cli {
    /// JSON configuration with flat keys; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Master seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    pub out: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic cohort with known texture labels.
    Phantom {
        /// Number of cases.
        #[arg(long)]
        n: Option<usize>,
    },
    /// Draw random training patches from every case of a manifest.
    Extract(ExtractArgs),
    /// Pretrain, initialize centroids and train jointly.
    Train(TrainArgs),
    /// Compute a signature and a window label map per case.
    Signature(SignatureArgs),
    /// Leave-one-out classification and grade regression on signatures.
    Link(LinkArgs),
    /// Finite-difference check of every layer and the small autoencoder.
    Gradcheck {
        /// Number of seeds.
        #[arg(long, default_value_t = 5)]
        seeds: u64,
    },
}

#[derive(Debug, Args)]
pub struct ExtractArgs {
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Total number of patches, shared equally across cases.
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub window_mm: Option<f64>,
    #[arg(long)]
    pub out_px: Option<usize>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum Mode {
    Online,
    Batch,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub patches: Option<PathBuf>,
    #[arg(long)]
    pub arch: Option<String>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub pretrain_epochs: Option<usize>,
    #[arg(long)]
    pub joint_epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long, value_enum)]
    pub centroid_update_mode: Option<Mode>,
    /// Continue joint training from a checkpoint instead of starting fresh.
    #[arg(long)]
    pub resume: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SignatureArgs {
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Window stride in voxels.
    #[arg(long)]
    pub stride: Option<usize>,
    #[arg(long)]
    pub window_mm: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
#[value(rename_all = "snake_case")]
pub enum TaskArg {
    Both,
    BinaryForest,
    GradeLasso,
}

#[derive(Debug, Args)]
pub struct LinkArgs {
    #[arg(long)]
    pub signatures: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = TaskArg::Both)]
    pub task: TaskArg,
    #[arg(long)]
    pub n_trees: Option<usize>,
}

impl From<Mode> for CentroidUpdateMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Online => CentroidUpdateMode::Online,
            Mode::Batch => CentroidUpdateMode::Batch,
        }
    }
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Runtime(String),
}

impl CliError {
    pub fn io(path: &Path, e: std::io::Error) -> Self {
        CliError::Runtime(format!("{}: {e}", path.display()))
    }
}

impl From<texdcn::Error> for CliError {
    fn from(e: texdcn::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
