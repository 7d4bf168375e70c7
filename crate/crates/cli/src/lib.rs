//! The `leadrisk` command-line workflow: generate, ingest, train, evaluate,
//! predict, importance and report.

pub mod commands;
pub mod config;
pub mod data;
pub mod error;
pub mod files;
pub mod report;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use config::{Overrides, RunConfig};
pub use error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "leadrisk", version, about = "Water lead-level risk modeling")]
pub struct Cli {
    /// Run configuration (TOML).
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Seed for every random choice; overrides `run.seed`.
    #[arg(long, global = true, value_name = "U64")]
    pub seed: Option<u64>,
    /// Worker thread cap.
    #[arg(long, global = true, value_name = "N")]
    pub threads: Option<usize>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Risk-map probability threshold.
    #[arg(long, global = true, value_name = "FLOAT")]
    pub threshold: Option<f64>,
    /// Cross-validation folds.
    #[arg(long, global = true, value_name = "K")]
    pub folds: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic city.
    Synth,
    /// Parse inputs and write parse reports and descriptive tables.
    Ingest,
    /// Cross-validate the stack and save the model.
    Train,
    /// Learning curve of one learner.
    Evaluate,
    /// Score parcels with a saved model.
    Predict {
        /// Model file; defaults to `predict.model` or `<out>/model.json`.
        #[arg(long, value_name = "PATH")]
        model: Option<PathBuf>,
    },
    /// Drop-one feature importance.
    Importance,
    /// Markdown report of a results directory.
    Report {
        /// Results directory; defaults to the output directory.
        dir: Option<PathBuf>,
    },
}

impl Cli {
    fn overrides(&self) -> Overrides {
        Overrides {
            seed: self.seed,
            threads: self.threads,
            out: self.out.clone(),
            threshold: self.threshold,
            folds: self.folds,
        }
    }

    fn load_config(&self) -> CliResult<RunConfig> {
        let path = self.config.as_ref().ok_or_else(|| CliError::config("--config is required"))?;
        config::load(path, &self.overrides())
    }
}

fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> CliResult<T> + Send) -> CliResult<T> {
    match threads {
        None => f(),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::internal(format!("thread pool: {e}")))?
            .install(f),
    }
}

/// Runs a parsed command and returns what it prints on success.
pub fn execute(cli: &Cli) -> CliResult<String> {
    if let Command::Report { dir } = &cli.command {
        let dir = match (dir, &cli.out, &cli.config) {
            (Some(d), _, _) => d.clone(),
            (None, Some(o), _) => o.clone(),
            (None, None, Some(_)) => cli.load_config()?.out,
            (None, None, None) => return Err(CliError::config("report needs a results directory")),
        };
        let path = report::cmd_report(&dir)?;
        return Ok(format!("wrote {}\n", path.display()));
    }
    let cfg = cli.load_config()?;
    with_threads(cfg.threads, || match &cli.command {
        Command::Synth => {
            let written = commands::cmd_synth(&cfg)?;
            Ok(written.iter().map(|p| format!("wrote {}\n", p.display())).collect())
        }
        Command::Ingest => commands::cmd_ingest(&cfg).map(|s| s + "\n"),
        Command::Train => commands::cmd_train(&cfg),
        Command::Evaluate => commands::cmd_evaluate(&cfg),
        Command::Predict { model } => commands::cmd_predict(&cfg, model.as_deref()).map(|s| s + "\n"),
        Command::Importance => commands::cmd_importance(&cfg),
        Command::Report { .. } => unreachable!("handled above"),
    })
}

/// Parses `args`, runs the command, prints its output or error, and returns
/// the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(&cli) {
        Ok(text) => {
            print!("{text}");
            error::EXIT_OK
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.code
        }
    }
}
