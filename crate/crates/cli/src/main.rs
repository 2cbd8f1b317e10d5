//! `windregime`: cluster daily weather fields, simulate one representative
//! day per cluster, and aggregate the results into long-term wind farm
//! power and wake estimates.

mod commands;
mod config;
mod failure;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::config::{parse_window, Overrides, RunConfig, SolverChoice};
use crate::failure::Failure;

#[derive(Debug, Parser)]
#[command(name = "windregime", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Run configuration (JSON); for `synth`, the synthetic dataset spec.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory; overrides the config's `out_dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[arg(long, global = true, value_enum)]
    solver: Option<SolverChoice>,

    #[arg(long, global = true)]
    k: Option<usize>,

    /// Domain window as lat_min,lat_max,lon_min,lon_max.
    #[arg(long, global = true, value_parser = parse_window, allow_hyphen_values = true)]
    window: Option<[f64; 4]>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic regime dataset.
    Synth,
    /// Scan k and write elbow.csv.
    Elbow,
    /// Fit k-means; write model.json, transitions.csv and labels.csv.
    Cluster,
    /// One solver run per cluster representative; write wakes/.
    Simulate,
    /// Simple and complex long-term estimates; write predictions/.
    Aggregate,
    /// Score against the every-day oracle; write report.json and validation/.
    Validate,
    /// All stages from elbow to validate.
    Run,
}

fn execute(cli: Cli) -> Result<(), Failure> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Failure::Config("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Config(format!("cannot start thread pool: {e}")))?;
    }
    let config = cli
        .config
        .ok_or_else(|| Failure::Config("--config is required".into()))?;
    if let Command::Synth = cli.command {
        let out = cli
            .out
            .ok_or_else(|| Failure::Config("synth needs --out".into()))?;
        return commands::synth(&config, &out, cli.seed);
    }
    let overrides = Overrides {
        out: cli.out,
        seed: cli.seed,
        solver: cli.solver,
        k: cli.k,
        window: cli.window,
    };
    let cfg = RunConfig::load(&config, &overrides)?;
    match cli.command {
        Command::Synth => unreachable!("handled above"),
        Command::Elbow => commands::elbow(&cfg),
        Command::Cluster => commands::cluster(&cfg),
        Command::Simulate => commands::simulate(&cfg),
        Command::Aggregate => commands::aggregate(&cfg),
        Command::Validate => commands::validate(&cfg),
        Command::Run => commands::run_all(&cfg),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("WINDREGIME_LOG", "warn"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("windregime: {f}");
            ExitCode::from(f.exit_code() as u8)
        }
    }
}
