use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use memarch::archive::Strategy;
use memarch::config::{LoadedConfig, ProviderKind, RunConfig};
use memarch::evaluation::Mode;
use memarch::report;
use memarch::Error;
use serde::Serialize;

/// Search, evaluate and compare agent memory designs.
#[derive(Parser)]
#[command(name = "memarch", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Run configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Seed of the learning loop.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_parser = parse::<Mode>)]
    mode: Option<Mode>,
    #[arg(long, value_parser = parse::<Strategy>)]
    strategy: Option<Strategy>,
    #[arg(long, value_parser = parse::<ProviderKind>)]
    provider: Option<ProviderKind>,
    /// Parent directory of run directories.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the design search loop.
    Learn(Common),
    /// Evaluate one design: a shipped name or an artifact path.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        design: String,
    },
    /// Every configured design on every configured family, as CSV.
    BaselineMatrix {
        #[command(flatten)]
        common: Common,
        /// Extra design evaluated next to the configured ones.
        #[arg(long)]
        design: Option<String>,
    },
    /// Score as a function of the number of collection tasks.
    Scaling {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        design: Option<String>,
        /// Comma-separated collection sizes.
        #[arg(long, value_delimiter = ',')]
        sizes: Option<Vec<usize>>,
    },
    /// Measure the no-memory deployment score.
    MeasureBaseline(Common),
    /// Re-export tree.json and tree.dot from a run directory.
    Tree {
        #[arg(long)]
        run: PathBuf,
    },
}

fn parse<T: std::str::FromStr<Err = Error>>(s: &str) -> Result<T, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn load(common: &Common) -> memarch::Result<LoadedConfig> {
    let mut loaded = RunConfig::load(&common.config)?;
    let config = &mut loaded.config;
    if let Some(seed) = common.seed {
        config.learning.seed = seed;
    }
    if let Some(mode) = common.mode {
        config.evaluation.mode = mode;
        config.learning.mode = mode;
    }
    if let Some(strategy) = common.strategy {
        config.sampling.strategy = strategy;
    }
    if let Some(kind) = common.provider {
        config.provider.kind = kind;
    }
    if let Some(out) = &common.out {
        config.out = out.clone();
    }
    Ok(loaded)
}

fn print<T: Serialize>(value: &T) -> memarch::Result<()> {
    emit(&(serde_json::to_string_pretty(value)? + "\n"));
    Ok(())
}

// A closed stdout (e.g. piped into `head`) is not an error worth reporting.
fn emit(text: &str) {
    let _ = std::io::stdout().lock().write_all(text.as_bytes());
}

fn run(cli: Cli) -> memarch::Result<()> {
    match cli.command {
        Command::Learn(common) => {
            let outcome = report::cmd_learn(&load(&common)?)?;
            print(&outcome.summary)
        }
        Command::Eval { common, design } => {
            let r = report::cmd_eval(&load(&common)?, &design)?;
            print(&serde_json::json!({
                "design_id": r.design_id,
                "mode": r.mode,
                "mean_score": r.mean_score,
                "standard_error": r.standard_error,
                "end_to_end_memory_cost_micros": r.cost.end_to_end_memory_cost_micros,
                "mean_retrieved_tokens": r.cost.mean_retrieved_tokens,
                "faults": r.faults.len(),
            }))
        }
        Command::BaselineMatrix { common, design } => {
            let rows = report::cmd_baseline_matrix(&load(&common)?, design.as_deref())?;
            emit(&report::to_csv(&rows)?);
            Ok(())
        }
        Command::Scaling { common, design, sizes } => {
            let rows = report::cmd_scaling(&load(&common)?, design.as_deref(), sizes.as_deref())?;
            emit(&report::to_csv(&rows)?);
            Ok(())
        }
        Command::MeasureBaseline(common) => {
            let r = report::cmd_measure_baseline(&load(&common)?)?;
            print(&serde_json::json!({ "baseline_score": r.mean_score, "standard_error": r.standard_error }))
        }
        Command::Tree { run } => {
            let tree = report::cmd_tree(&run)?;
            emit(&tree.to_dot());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let message = err.to_string().replace('\n', " ");
            eprintln!("error kind={} message={message:?}", err.kind());
            match err {
                Error::Config(_) | Error::Usage(_) => ExitCode::from(2),
                _ => ExitCode::from(3),
            }
        }
    }
}
