//! `orthoreg` command-line driver.
//!
//! Exit codes: 0 success, 1 I/O or other failure, 2 configuration error,
//! 3 data error, 4 numerical divergence.

mod commands;
mod settings;

use std::fmt;

use clap::{CommandFactory, FromArgMatches, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(
    name = "orthoreg",
    version,
    about = "Graph-regularized MLP training and collapse diagnostics"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Rest {
    /// `--config FILE` and `--key value` settings.
    #[arg(allow_hyphen_values = true, trailing_var_arg = true, value_name = "SETTINGS")]
    settings: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Validate a dataset directory and report its statistics.
    Ingest(Rest),
    /// Train a graph-regularized MLP over several seeds.
    Train(Rest),
    /// Run collapse dynamics and check the ratio and eigenvalue properties.
    Simulate(Rest),
    /// Run an experiment suite and write one CSV plus one JSON file.
    Suite {
        #[arg(value_enum)]
        name: SuiteName,
        #[command(flatten)]
        rest: Rest,
    },
    /// Time batched MLP inference against GCN inference.
    Bench(Rest),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum SuiteName {
    Table1,
    Table3,
    Coldstart,
    Robustness,
    Bench,
}

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Core(orthoreg::Error),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(msg) => write!(f, "configuration error: {msg}"),
            CliError::Core(e) => write!(f, "{e}"),
        }
    }
}

impl From<orthoreg::Error> for CliError {
    fn from(e: orthoreg::Error) -> Self {
        CliError::Core(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Core(e.into())
    }
}

impl CliError {
    fn exit_code(&self) -> i32 {
        use orthoreg::Error as E;
        match self {
            CliError::Config(_) => 2,
            CliError::Core(e) => match e {
                E::InvalidConfig(_) | E::UnstableStepSize(_) => 2,
                E::MissingFile(_)
                | E::Parse { .. }
                | E::ShapeMismatch(_)
                | E::EmptyGraph
                | E::EmptyMask
                | E::NotSymmetric(_)
                | E::InputNotWhitened(_) => 3,
                E::Divergence { .. } | E::NoConvergence { .. } => 4,
                E::Checkpoint(_) | E::Io(_) => 1,
            },
        }
    }
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(raw) = std::env::var("ORTHOREG_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Config(format!("ORTHOREG_THREADS must be a positive integer, got {raw:?}")))?;
    if std::env::var_os("MATMUL_NUM_THREADS").is_none() {
        std::env::set_var("MATMUL_NUM_THREADS", n.to_string());
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Config(format!("cannot size the thread pool: {e}")))
}

fn run() -> Result<(), CliError> {
    let mut cmd = Cli::command();
    for name in ["ingest", "train", "simulate", "suite", "bench"] {
        cmd = cmd.mut_subcommand(name, |c| c.after_help(settings::help_text(name)));
    }
    let matches = cmd.try_get_matches().unwrap_or_else(|e| e.exit());
    let cli = Cli::from_arg_matches(&matches).unwrap_or_else(|e| e.exit());
    configure_threads()?;
    let summary = match cli.command {
        Command::Ingest(r) => commands::ingest(&r.settings)?,
        Command::Train(r) => commands::train(&r.settings)?,
        Command::Simulate(r) => commands::simulate(&r.settings)?,
        Command::Suite { name, rest } => commands::suite(name, &rest.settings)?,
        Command::Bench(r) => commands::bench(&r.settings)?,
    };
    println!("{summary}");
    Ok(())
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    if let Err(e) = run() {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
