//! `secfpp` command-line entry point.

mod commands;
mod load;
mod selftest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(name = "secfpp", version, about = "Secure federated prompt personalization simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// JSON configuration file (for `audit`: a run directory or its config.json).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the seed in the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output root; each invocation writes to `<out>/<run-id>/`.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Worker threads (defaults to the number of cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    /// Run the full protocol and audit its transcript.
    Run,
    /// Mutual information sweep over cluster size and prompt dimension.
    Mi,
    /// Per-phase timing and byte accounting.
    Bench,
    /// Re-audit the transcript of a finished run.
    Audit,
    /// Reference and oracle-equivalence suites at reduced sizes.
    Selftest,
}

/// Failure with the process exit code it maps to.
#[derive(Debug)]
pub enum Failure {
    Selftest,
    Config(String),
    Protocol(String),
    Audit(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Selftest => 1,
            Failure::Config(_) => 2,
            Failure::Protocol(_) => 3,
            Failure::Audit(_) => 4,
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(threads) = cli.threads {
        if threads == 0 {
            eprintln!("configuration error: --threads must be at least 1");
            return ExitCode::from(2);
        }
        rayon::ThreadPoolBuilder::new().num_threads(threads).build_global().expect("pool built once");
    }
    let ctx = commands::Context { config: cli.config, seed: cli.seed, out: cli.out };
    let result = match cli.command {
        Command::Run => commands::run(&ctx),
        Command::Mi => commands::mi(&ctx),
        Command::Bench => commands::bench(&ctx),
        Command::Audit => commands::audit(&ctx),
        Command::Selftest => selftest::main(),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            match &f {
                Failure::Selftest => eprintln!("selftest failed"),
                Failure::Config(m) => eprintln!("configuration error: {m}"),
                Failure::Protocol(m) => eprintln!("protocol error: {m}"),
                Failure::Audit(m) => eprintln!("audit failed: {m}"),
            }
            ExitCode::from(f.code())
        }
    }
}
