use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use fedprice::experiment::{run_scenario, ExperimentConfig, SCENARIOS};
use fedprice::par::Execution;

#[derive(Parser)]
#[command(name = "fedprice", version, about = "Noise-game experiments for federated learning")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write its CSV table.
    Run {
        /// One of fig1, fig2, poa, trace, bound.
        scenario: String,
        /// TOML experiment config.
        #[arg(long)]
        config: PathBuf,
        /// Replaces the config seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Output CSV, default `<scenario>.csv`.
        #[arg(long)]
        out: Option<PathBuf>,
        /// `key=value` with dotted keys, e.g. `game.n_clients=10`.
        #[arg(long = "override", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        /// Run grid cells one at a time.
        #[arg(long)]
        sequential: bool,
    },
}

fn run(cli: Cli) -> Result<()> {
    let Command::Run { scenario, config, seed, out, mut overrides, sequential } = cli.command;
    if !SCENARIOS.contains(&scenario.as_str()) {
        anyhow::bail!("unknown scenario {scenario:?}; expected one of {}", SCENARIOS.join(", "));
    }
    if let Some(s) = seed {
        overrides.push(format!("seed={s}"));
    }
    let cfg = ExperimentConfig::load(&config, &overrides)?;
    let exec = if sequential { Execution::Sequential } else { Execution::Parallel };
    let table = run_scenario(&scenario, &cfg, exec).with_context(|| format!("scenario {scenario} failed"))?;
    let out = out.unwrap_or_else(|| PathBuf::from(format!("{scenario}.csv")));
    table.write_atomic(&out).with_context(|| format!("cannot write {}", out.display()))?;
    for line in &table.summary {
        println!("{line}");
    }
    println!("wrote {} rows to {}", table.rows.len(), out.display());
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
