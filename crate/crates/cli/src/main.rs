//! `emq`: batch runner for the attack, counting, degree, bound and reduction experiments.
//!
//! Exit codes: 0 when every check passes, 1 when a checked bound is violated,
//! 2 on a configuration or I/O error.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Core(emq_core::Error),
    Io(std::io::Error),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Io(e) => write!(f, "i/o error: {e}"),
        }
    }
}

impl From<emq_core::Error> for CliError {
    fn from(e: emq_core::Error) -> Self {
        CliError::Core(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e)
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Io(e.into())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Io(e.into())
    }
}

#[derive(Parser, Debug)]
#[command(name = "emq", version, about = "Even-Mansour quantum query experiments", args_override_self = true)]
pub struct Cli {
    /// `key = value` file whose entries act as flags of the subcommand.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Directory for reports.
    #[arg(long, global = true, env = "EMQ_OUTPUT_DIR", default_value = "emq-out")]
    pub out_dir: PathBuf,
    /// Worker threads; 0 uses one per core.
    #[arg(long, global = true, default_value_t = 0)]
    pub jobs: usize,
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Key recovery against random Even-Mansour instances over many seeds.
    Attack(commands::AttackArgs),
    /// Subgroup counts against enumeration.
    Subgroups(commands::SubgroupsArgs),
    /// Degree checks for Q(D) and for a corpus of partial functions.
    Qdegree(commands::QdegreeArgs),
    /// Tabulate the query lower bound over a range of n.
    Bound(commands::BoundArgs),
    /// Compile random standard circuits to synchronized form and compare outputs.
    Reduce(commands::ReduceArgs),
}

fn main() -> ExitCode {
    let args = match config::expand(std::env::args().collect()) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("emq: configuration error: {e}");
            return ExitCode::from(2);
        }
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(cli.jobs).build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("emq: configuration error: {e}");
            return ExitCode::from(2);
        }
    };
    match pool.install(|| commands::run(&cli)) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("emq: {e}");
            ExitCode::from(2)
        }
    }
}
