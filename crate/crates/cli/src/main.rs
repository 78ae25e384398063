//! `paleojoint`: simulate cores, run joint age/climate inference, compare
//! models and run the fixed-chronology ablation.

mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use paleojoint_core::params::ModelVariant;
use paleojoint_core::Error;

#[derive(Debug, Parser)]
#[command(name = "paleojoint", version, about = "Joint Bayesian inference of sediment-core chronologies and forced climate dynamics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Run configuration (TOML).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory; created if missing.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Overrides the seed from the configuration.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads; results do not depend on this.
    #[arg(long)]
    pub workers: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Draw a synthetic core and its truth from the forward model.
    Simulate {
        #[command(flatten)]
        common: Common,
    },
    /// Joint inference of ages, climate states and parameters.
    Infer {
        /// Core CSV; defaults to `io.core` from the configuration.
        core: Option<PathBuf>,
        #[arg(long)]
        model: Option<ModelVariant>,
        #[command(flatten)]
        common: Common,
    },
    /// Bayes factor between two evidence files.
    Compare {
        evidence_a: PathBuf,
        evidence_b: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-run inference on chronologies drawn from a joint posterior, with
    /// ages held fixed, for both model variants.
    Ablation {
        core: Option<PathBuf>,
        /// Chronology draws CSV from a joint `infer` run.
        #[arg(long)]
        posterior: PathBuf,
        /// Number of chronologies; defaults to `summary.ablation_draws`.
        #[arg(long)]
        k: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
    /// Per-slice HDRs and age spread from a chronology draws CSV.
    Summarize {
        chronology: PathBuf,
        #[command(flatten)]
        common: Common,
    },
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::Parameter(_) => 2,
        Error::FilterCollapse { .. } | Error::RunCollapse { .. } => 4,
        Error::Domain { .. }
        | Error::Ordering(_)
        | Error::Parse { .. }
        | Error::Consistency(_)
        | Error::Io { .. }
        | Error::Json(_) => 3,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate { common } => commands::simulate(&common),
        Command::Infer { core, model, common } => commands::infer(core, model, &common),
        Command::Compare { evidence_a, evidence_b, out } => commands::compare(&evidence_a, &evidence_b, out),
        Command::Ablation { core, posterior, k, common } => commands::ablation(core, &posterior, k, &common),
        Command::Summarize { chronology, common } => commands::summarize(&chronology, &common),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
