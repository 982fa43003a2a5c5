//! Experiment runner behind the `quadfuse` binary.

pub mod commands;
pub mod config;
pub mod error;
pub mod experiment;

use std::io::Write as _;
use std::path::PathBuf;

use clap::Parser;

pub use commands::Command;
pub use config::{Config, CONFIG_HELP};
pub use error::{CliError, Result};

#[derive(Debug, Parser)]
#[command(name = "quadfuse", version, about = "Quadruple multimodal dealer-account classification workbench", after_long_help = CONFIG_HELP)]
pub struct Cli {
    /// TOML configuration file; see --help for every key.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the config's seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Overrides the config's output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

impl Cli {
    pub fn resolve_config(&self) -> Result<Config> {
        let cfg = match &self.config {
            Some(path) => Config::load(path)?,
            None => Config::default(),
        };
        cfg.resolve(self.seed, self.out.clone())
    }
}

/// Runs a parsed command line, printing the summary to stdout. Returns the
/// process exit code.
pub fn run(cli: &Cli) -> i32 {
    let result = cli.resolve_config().and_then(|cfg| commands::run(cli.command, &cfg));
    match result {
        Ok(summary) => {
            // A closed stdout (e.g. piped into `head`) is not a failure.
            let text = serde_json::to_string_pretty(&summary).expect("summaries serialize");
            let _ = writeln!(std::io::stdout().lock(), "{text}");
            0
        }
        Err(e) => {
            eprintln!("quadfuse: {e}");
            e.exit_code()
        }
    }
}
