use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use replica_ecc::cli::{self, CliError, Format, Overrides, RunConfig};

/// Reliability and storage-overhead model for BCH-protected memory with
/// replicated or erasure-coded blocks.
#[derive(Debug, Parser)]
#[command(name = "replica-ecc", version, about)]
struct Args {
    #[command(subcommand)]
    command: Command,

    /// JSON run configuration; built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Monte Carlo seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Monte Carlo trial count.
    #[arg(long, global = true)]
    trials: Option<u64>,

    #[arg(long, global = true, value_enum)]
    format: Option<Format>,

    /// Output file; a `<name>.meta.json` sidecar is written next to it.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Evaluate every configured scheme at the configured code strength.
    Analyze,
    /// Sweep t, block size, or replica count and emit one table per scheme.
    Sweep,
    /// Find the weakest code meeting the DUE (and optional NDE) target.
    Optimize,
    /// Check the closed forms against exact enumeration and Monte Carlo.
    Validate,
}

fn run(args: Args) -> Result<(), CliError> {
    let mut cfg = match &args.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    Overrides {
        seed: args.seed,
        trials: args.trials,
        format: args.format,
        out: args.out.clone(),
    }
    .apply(&mut cfg);
    cfg.validate()?;

    let (name, artifacts, deferred) = match args.command {
        Command::Analyze => ("analyze", cli::cmd_analyze(&cfg)?, None),
        Command::Sweep => ("sweep", cli::cmd_sweep(&cfg)?, None),
        Command::Optimize => ("optimize", cli::cmd_optimize(&cfg)?, None),
        Command::Validate => {
            let (artifacts, failure) = cli::cmd_validate(&cfg)?;
            ("validate", artifacts, failure)
        }
    };
    let stdout = std::io::stdout();
    let mut lock = stdout.lock();
    cli::emit(name, &cfg, &artifacts, &mut lock)?;
    let _ = lock.flush();
    deferred.map_or(Ok(()), Err)
}

fn main() -> ExitCode {
    let args = Args::parse();
    match run(args) {
        Ok(()) => ExitCode::from(cli::EXIT_OK as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
