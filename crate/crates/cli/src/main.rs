//! `genbound`: evaluate generalization bounds, estimate complexities and run
//! coverage experiments from JSON parameter documents.

mod commands;
mod failure;
mod formulas;
mod schema;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::Value;

use crate::failure::Failure;

#[derive(Debug, Parser)]
#[command(name = "genbound", version, about = "Nonasymptotic generalization bounds and their empirical validation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// Parameter document: a path to a JSON file, or inline JSON starting with `{`.
    #[arg(long, global = true)]
    pub params: Option<String>,

    /// Write the result here instead of standard output.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    /// Seed for randomized computations; overrides any seed in the parameters.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Worker threads (default: all cores). Results do not depend on this.
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    pub format: Format,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    /// Per-trial records; only for `coverage` and `mixing-demo`.
    Csv,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Evaluate a bound formula by id.
    Bound {
        #[arg(long, required_unless_present = "list")]
        formula: Option<String>,
        /// List the available formula ids and their parameters.
        #[arg(long)]
        list: bool,
    },
    /// Search the constants (c0, lambda0) minimizing V.
    OptimizeConstants,
    /// Empirical Rademacher complexity of a function table or class.
    Rademacher,
    /// Empirical L1 covering numbers at given radii.
    Cover,
    /// Evaluate and classify a uniform entropy estimate.
    Entropy,
    /// Blocked deviation bound against simulated two-state Markov chains.
    MixingDemo,
    /// Run a seeded coverage experiment.
    Coverage {
        /// Built-in configuration (see `--list`).
        #[arg(long, conflicts_with = "list")]
        preset: Option<String>,
        #[arg(long)]
        list: bool,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Bound { .. } => "bound",
            Command::OptimizeConstants => "optimize-constants",
            Command::Rademacher => "rademacher",
            Command::Cover => "cover",
            Command::Entropy => "entropy",
            Command::MixingDemo => "mixing-demo",
            Command::Coverage { .. } => "coverage",
        }
    }
}

/// Reads `--params`: inline JSON when it starts with `{`, otherwise a file path.
fn load_params(arg: Option<&str>) -> Result<Option<Value>, Failure> {
    let Some(arg) = arg else { return Ok(None) };
    let text = if arg.trim_start().starts_with('{') {
        arg.to_owned()
    } else {
        std::fs::read_to_string(arg).map_err(|e| Failure::invalid(format!("params: cannot read {arg}: {e}")))?
    };
    serde_json::from_str(&text).map(Some).map_err(|e| Failure::invalid(format!("params: malformed JSON: {e}")))
}

fn run(cli: &Cli) -> Result<(), Failure> {
    if let Some(threads) = cli.threads {
        if threads == 0 {
            return Err(Failure::invalid("threads: must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| Failure::Compute(e.to_string()))?;
    }
    if cli.format == Format::Csv && !matches!(cli.command, Command::Coverage { .. } | Command::MixingDemo) {
        return Err(Failure::invalid(format!(
            "format: csv output is only available for coverage and mixing-demo, not {}",
            cli.command.name()
        )));
    }
    let params = load_params(cli.params.as_deref())?;
    let artifact = commands::execute(cli, params)?;
    artifact.write(cli.out.as_deref(), cli.format)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprint!("error: {failure}");
            failure.exit_code()
        }
    }
}
