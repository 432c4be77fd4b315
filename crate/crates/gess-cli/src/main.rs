//! `gess`: file-based local-feature pipeline. Subcommands cover feature
//! extraction from cue maps, homography-supervised matching evaluation,
//! depth-to-reliability generation and the numeric verification suite.
//!
//! Exit codes: 0 success, 1 verification or metric failure, 2 input error.

mod config;
mod eval_cmd;
mod extract;
mod gen_stability;
mod verify;

use clap::{Parser, Subcommand};
use config::RunConfig;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Debug)]
pub enum CliError {
    /// Bad or missing input; exit 2.
    Input(String),
    /// A verification or metric check failed; exit 1.
    Failure(String),
}

#[derive(Parser)]
#[command(name = "gess", version, about = "local feature extraction and evaluation")]
struct Cli {
    /// Configuration file; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<String>,
    /// Worker count; only 1 (fully deterministic) is currently implemented.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Extract keypoints and descriptors from per-image cue files.
    Extract {
        /// Directory of <stem>.<role>.gtf cue files.
        cue_dir: PathBuf,
        /// Output directory for .kpd files.
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate matching over an HPatches-style dataset.
    Eval {
        /// Dataset root of sequence folders.
        dataset: PathBuf,
        /// Directory of per-sequence .kpd features.
        features: PathBuf,
        /// Output directory for report files.
        #[arg(long)]
        out: PathBuf,
        /// Summary printed to stdout: json (default) or csv.
        #[arg(long, default_value = "json")]
        format: String,
    },
    /// Generate a reliability map from a depth map.
    GenStability {
        /// Input depth GTF file.
        depth: PathBuf,
        /// Output reliability GTF file.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the oracle-based verification suite.
    Verify {
        /// Negative control: perturb one weight after oracle capture.
        #[arg(long, hide = true)]
        inject_fault: bool,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    if cli.jobs == 0 {
        return Err(CliError::Input("--jobs must be at least 1".into()));
    }
    let cfg = match &cli.config {
        Some(path) => RunConfig::load(path).map_err(CliError::Input)?,
        None => RunConfig::default(),
    };
    match &cli.command {
        Command::Extract { cue_dir, out } => extract::run(&cfg, cue_dir, out),
        Command::Eval { dataset, features, out, format } => {
            if format != "json" && format != "csv" {
                return Err(CliError::Input(format!("unknown format {format:?}")));
            }
            eval_cmd::run(&cfg, dataset, features, out, format)
        }
        Command::GenStability { depth, out } => gen_stability::run(&cfg, depth, out),
        Command::Verify { inject_fault } => verify::run(&cfg, *inject_fault),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Failure(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(CliError::Input(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
