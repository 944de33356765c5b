//! `gazebc` command-line pipeline.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::RunConfig;

#[derive(Parser, Debug)]
#[command(
    name = "gazebc",
    version,
    about = "Behavioral cloning of code-reading attention"
)]
struct Cli {
    /// JSON run configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(flatten)]
    run: RunConfig,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    /// Dump the tokens of every corpus file as JSON Lines.
    Tokenize,
    /// Turn fixation CSVs into token trajectories.
    Ingest,
    /// Add perturbed, reweighted copies of every trajectory.
    Augment,
    /// Generate a synthetic corpus, labels and expert demonstrations.
    Synth,
    /// Train a policy and write a checkpoint and per-epoch metrics.
    Train,
    /// Print teacher-forced metrics of a checkpoint.
    Eval,
    /// Greedily decode one snippet with a checkpoint.
    Rollout,
    /// Compare analytic and numerical gradients of the full policy.
    Gradcheck,
}

/// A failed run: exit code and a one-line diagnostic.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn usage(message: impl Into<String>) -> Self {
        Failure {
            code: 1,
            message: message.into(),
        }
    }

    /// Prefixes the message with the file the failing input came from.
    pub fn context(self, origin: &str) -> Self {
        Failure {
            message: format!("{origin}: {}", self.message),
            ..self
        }
    }
}

impl From<gazebc::Error> for Failure {
    fn from(e: gazebc::Error) -> Self {
        Failure {
            code: if e.is_data_error() { 2 } else { 1 },
            message: e.to_string(),
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let text = e.to_string();
            let first = text.lines().next().unwrap_or("invalid arguments");
            eprintln!("{first}");
            return ExitCode::from(1);
        }
    };
    let result =
        RunConfig::resolve(cli.config.as_deref(), &cli.run).and_then(|run| match cli.command {
            Command::Tokenize => commands::tokenize(&run),
            Command::Ingest => commands::ingest(&run),
            Command::Augment => commands::augment(&run),
            Command::Synth => commands::synth(&run),
            Command::Train => commands::train(&run),
            Command::Eval => commands::eval(&run),
            Command::Rollout => commands::rollout(&run),
            Command::Gradcheck => commands::gradcheck(&run),
        });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message.replace('\n', " "));
            ExitCode::from(f.code)
        }
    }
}
