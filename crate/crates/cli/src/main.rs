//! `gr2d2` command-line tool.
//!
//! Exit codes: 0 success, 1 invalid input or configuration, 2 runtime
//! failure, 3 a statistical check failed.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use config::{
    AbaloneArgs, Figure1Args, FileConfig, FitArgs, GewekeArgs, PriorCheckArgs, SimulateArgs,
};

#[derive(Parser)]
#[command(name = "gr2d2", version, about = "Group R2D2 shrinkage regression")]
struct Cli {
    /// Master seed; every command is reproducible given it [default: 1].
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// TOML file with `seed`, `out` and one table per command.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory [default: gr2d2-out].
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Format of the summary printed to standard output.
    #[arg(long, global = true, value_enum, default_value_t = Format::Kv)]
    format: Format,
    /// Suppress progress messages on standard error.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Kv,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a grouped regression from a CSV file.
    Fit(FitArgs),
    /// Run simulation replications for one scenario.
    Simulate(SimulateArgs),
    /// Check the prior's R² decomposition, tails, Laplace form and variance identity.
    PriorCheck(PriorCheckArgs),
    /// Prior draw clouds for β_11, β_12 and their IQR comparison.
    Figure1(Figure1Args),
    /// Additive B-spline model on the abalone data.
    Abalone(AbaloneArgs),
    /// Joint-distribution test of the sampler.
    Geweke(GewekeArgs),
}

pub struct Context {
    pub seed: u64,
    pub out: PathBuf,
    pub quiet: bool,
}

#[derive(Debug)]
pub enum Failure {
    Validation(String),
    Runtime(String),
    Check(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Validation(_) => 1,
            Failure::Runtime(_) => 2,
            Failure::Check(_) => 3,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Validation(m) | Failure::Runtime(m) | Failure::Check(m) => f.write_str(m),
        }
    }
}

impl From<gr2d2::Error> for Failure {
    fn from(e: gr2d2::Error) -> Self {
        use gr2d2::Error::*;
        match e {
            Param { .. } | Data(_) | Config(_) | Strategy(_) | Parse { .. } => {
                Failure::Validation(e.to_string())
            }
            Domain { .. } | Chain { .. } | Numerical(_) | Io(_) => Failure::Runtime(e.to_string()),
        }
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    let file = match &cli.config {
        Some(p) => config::load(p)?,
        None => FileConfig::default(),
    };
    let ctx = Context {
        seed: cli.seed.or(file.seed).unwrap_or(1),
        out: cli
            .out
            .or(file.out)
            .unwrap_or_else(|| PathBuf::from("gr2d2-out")),
        quiet: cli.quiet,
    };
    let (name, result) = match cli.command {
        Command::Fit(a) => ("fit", commands::fit(&ctx, config::layer(file.fit, a)?)),
        Command::Simulate(a) => (
            "simulate",
            commands::simulate(&ctx, config::layer(file.simulate, a)?),
        ),
        Command::PriorCheck(a) => (
            "prior-check",
            commands::prior_check(&ctx, config::layer(file.prior_check, a)?),
        ),
        Command::Figure1(a) => (
            "figure1",
            commands::figure1(&ctx, config::layer(file.figure1, a)?),
        ),
        Command::Abalone(a) => (
            "abalone",
            commands::abalone(&ctx, config::layer(file.abalone, a)?),
        ),
        Command::Geweke(a) => (
            "geweke",
            commands::geweke(&ctx, config::layer(file.geweke, a)?),
        ),
    };
    let done = result?;
    let text = match cli.format {
        Format::Kv => gr2d2::report::key_values(&done.summary)?,
        Format::Json => gr2d2::report::to_json(&done.summary)? + "\n",
    };
    print!("{text}");
    if done.pass {
        Ok(())
    } else {
        Err(Failure::Check(format!("{name}: at least one check failed")))
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.code())
        }
    }
}
