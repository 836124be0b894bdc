//! The `hicrec` command line: `prepare`, `train`, `evaluate`, `sweep` and
//! `gen-synthetic`, each driven by one TOML config file.

pub mod cache;
pub mod commands;
pub mod config;
pub mod error;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

use hicrec_core::eval::SweepKind;
use hicrec_core::model::ModelKind;

pub use config::RunConfig;
pub use error::CliError;

#[derive(Debug, Parser)]
#[command(name = "hicrec", version, about = "Meta-path GCN recommender with interest composition")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, clap::Args)]
pub struct Common {
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides the config's `seed`.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build the graph, split and aspect matrices and cache them.
    Prepare {
        #[command(flatten)]
        common: Common,
    },
    /// Train a model and write checkpoints, a log and a run manifest.
    Train {
        #[command(flatten)]
        common: Common,
        /// hicrec, hicrec-linear, hicrec-mlp or mf-bpr.
        #[arg(long)]
        model: Option<String>,
    },
    /// Rank held-out items and write the HR/NDCG report.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: Option<String>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Retrain and evaluate over aspect subsets or embedding dimensions.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// aspects or dimension.
        #[arg(long)]
        kind: String,
        #[arg(long)]
        model: Option<String>,
    },
    /// Write a synthetic dataset with planted taste structure.
    GenSynthetic {
        #[command(flatten)]
        common: Common,
    },
}

fn load(common: &Common) -> Result<RunConfig, CliError> {
    let mut cfg = RunConfig::load(&common.config)?;
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn model_arg(m: &Option<String>) -> Result<Option<ModelKind>, CliError> {
    m.as_deref()
        .map(|s| s.parse::<ModelKind>().map_err(|e| CliError::Usage(format!("--model: {e}"))))
        .transpose()
}

pub fn execute(cmd: &Command) -> Result<(), CliError> {
    match cmd {
        Command::Prepare { common } => commands::prepare(&load(common)?).map(|_| ()),
        Command::Train { common, model } => {
            let cfg = load(common)?;
            let kind = match model_arg(model)? {
                Some(k) => k,
                None => cfg.model_kind()?,
            };
            commands::train(&cfg, kind).map(|_| ())
        }
        Command::Evaluate {
            common,
            model,
            checkpoint,
        } => commands::evaluate(&load(common)?, model_arg(model)?, checkpoint.as_deref()).map(|_| ()),
        Command::Sweep { common, kind, model } => {
            let sweep_kind: SweepKind = kind.parse().map_err(|e| CliError::Usage(format!("--kind: {e}")))?;
            commands::sweep(&load(common)?, sweep_kind, model_arg(model)?).map(|_| ())
        }
        Command::GenSynthetic { common } => commands::gen_synthetic(&load(common)?),
    }
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).try_init();
    match execute(&cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
