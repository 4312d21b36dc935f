//! `maple`: the pipeline as subcommands over a TOML run configuration.
//!
//! Exit status: 0 success, 1 runtime failure, 2 configuration error,
//! 3 missing upstream artifact, 4 artifact produced under a different
//! configuration (rerun upstream or pass `--force`).

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use maple_core::artifact::ArtifactError;
use maple_core::config::ConfigError;
use maple_core::corpus::CorpusError;

#[derive(Debug, Parser)]
#[command(name = "maple", version, about = "Two-stage next-app prediction pipeline")]
pub struct Cli {
    /// Run configuration file.
    #[arg(long, global = true, default_value = "maple.toml")]
    pub config: PathBuf,
    /// Restrict the command to one dataset id.
    #[arg(long, global = true)]
    pub dataset: Option<String>,
    /// Restrict fit (and --backend) to one stage.
    #[arg(long, global = true, value_parser = clap::value_parser!(u8).range(1..=2))]
    pub stage: Option<u8>,
    #[arg(long, global = true)]
    pub k: Option<usize>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// reference | exec:<command> | tcp:<host:port>
    #[arg(long, global = true)]
    pub backend: Option<String>,
    /// Comma-separated components to disable: stage1, app_seq, installed, optional.
    #[arg(long, global = true)]
    pub ablate: Option<String>,
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Accept upstream artifacts whose config hash differs.
    #[arg(long, global = true)]
    pub force: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse, sessionize, filter and split every dataset.
    Ingest,
    /// Build the type table and the training pair files.
    BuildPrompts,
    /// Fit reference models from the pair files.
    Fit,
    /// Run two-stage inference over the test splits.
    Predict,
    /// Score predictions and the MFU/MRU baselines.
    Eval,
    /// Fit and evaluate the full model and each ablation row.
    Ablate,
    /// Write a synthetic dataset, its manifest and a starter config.
    Synth {
        /// Output directory.
        dir: PathBuf,
        #[arg(long, default_value = "synthetic")]
        id: String,
        #[arg(long, default_value_t = 20)]
        users: usize,
        #[arg(long, default_value_t = 5000)]
        events: usize,
    },
}

pub const EXIT_RUNTIME: u8 = 1;
pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_MISSING: u8 = 3;
pub const EXIT_HASH: u8 = 4;

fn artifact_code(e: &ArtifactError) -> Option<u8> {
    match e {
        ArtifactError::Missing(_) => Some(EXIT_MISSING),
        ArtifactError::HashMismatch { .. } => Some(EXIT_HASH),
        _ => None,
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<ArtifactError>() {
            if let Some(code) = artifact_code(e) {
                return code;
            }
        }
        if let Some(CorpusError::Artifact(e)) = cause.downcast_ref::<CorpusError>() {
            if let Some(code) = artifact_code(e) {
                return code;
            }
        }
        if let Some(e) = cause.downcast_ref::<ConfigError>() {
            return match e {
                ConfigError::Artifact(a) => artifact_code(a).unwrap_or(EXIT_RUNTIME),
                _ => EXIT_CONFIG,
            };
        }
    }
    EXIT_RUNTIME
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
