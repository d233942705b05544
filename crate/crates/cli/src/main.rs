//! degenbeam: config-driven experiments on the degenerate beam.
//!
//! Usage: degenbeam <command> --config <path> --out <dir> [--seed N]
//!
//! Exit status: 0 when every asserted check passes, 1 when a check fails,
//! 2 for configuration errors, 3 for parameter combinations the theory
//! leaves open (refused rather than extrapolated).

mod commands;
mod config;

use clap::{Parser, Subcommand};
use commands::Ctx;
use config::RunConfig;
use degenbeam::Error;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "degenbeam", version, about = "degenerate beam laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// JSON run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory for reports and traces.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Override the config's random seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Classify the coefficient and report K.
    Classify,
    /// Evaluate every explicit constant and the decay envelope parameters.
    Constants,
    /// Time-integrate the configured regime and record traces.
    Simulate,
    /// Feedback run compared against the exponential decay envelope.
    Decay,
    /// Conservation, multiplier identities, functional inequalities.
    Identities,
    /// Empirical observability constant against the explicit bound.
    Observability,
    /// Null control by Gramian inversion, with independent verification.
    Control,
    /// Boundary elliptic problem and its estimates.
    Elliptic,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Classify => "classify",
            Command::Constants => "constants",
            Command::Simulate => "simulate",
            Command::Decay => "decay",
            Command::Identities => "identities",
            Command::Observability => "observability",
            Command::Control => "control",
            Command::Elliptic => "elliptic",
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (config_path, out_dir) = match (&cli.config, &cli.out) {
        (Some(c), Some(o)) => (c.clone(), o.clone()),
        _ => {
            eprintln!("error: --config and --out are required");
            return ExitCode::from(2);
        }
    };
    let text = match std::fs::read_to_string(&config_path) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: cannot read config {}: {e}", config_path.display());
            return ExitCode::from(2);
        }
    };
    let mut cfg = match RunConfig::from_str(&text) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: config: {e}");
            return ExitCode::from(2);
        }
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Err(e) = std::fs::create_dir_all(&out_dir) {
        eprintln!("error: cannot create output directory {}: {e}", out_dir.display());
        return ExitCode::from(2);
    }
    let ctx = Ctx { cfg: &cfg, out: &out_dir };
    let outcome = match cli.command {
        Command::Classify => commands::run_classify(&ctx),
        Command::Constants => commands::run_constants(&ctx),
        Command::Simulate => commands::run_simulate(&ctx),
        Command::Decay => commands::run_decay(&ctx),
        Command::Identities => commands::run_identities(&ctx),
        Command::Observability => commands::run_observability(&ctx),
        Command::Control => commands::run_control(&ctx),
        Command::Elliptic => commands::run_elliptic(&ctx),
    };
    match outcome {
        Ok(true) => {
            println!("{}: all checks passed", cli.command.name());
            ExitCode::SUCCESS
        }
        Ok(false) => {
            println!("{}: checks FAILED (see report)", cli.command.name());
            ExitCode::from(1)
        }
        Err(e @ (Error::OutOfScope(_) | Error::DivergentIntegral(_))) => {
            eprintln!("error: {e}");
            ExitCode::from(3)
        }
        Err(
            e @ (Error::InvalidCoefficient(_) | Error::ExpressionParse(_) | Error::Precondition(_)),
        ) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
