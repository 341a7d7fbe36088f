use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use postprice::policies::PolicyKind;
use postprice::runner::PolicySpec;
use postprice_cli::bench::BenchOptions;
use postprice_cli::commands::{self, RunOptions};
use postprice_cli::CliError;

/// Online posted-price bandit experiments for edge resource allocation.
///
/// Set POSTPRICE_QUIET=1 to suppress the summary tables on stdout.
#[derive(Parser)]
#[command(name = "postprice", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write metrics, arms, histogram, timing and manifest files.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Override the master seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads for episodes; results do not depend on it.
        #[arg(long, default_value_t = 1)]
        parallelism: usize,
        /// `geometric`, `every:N`, or a comma-separated list of rounds.
        #[arg(long)]
        checkpoints: Option<String>,
    },
    /// Time every policy's decisions on a synthetic Bernoulli bandit for several K.
    BenchTiming {
        /// Comma-separated arm counts.
        #[arg(long, value_delimiter = ',', default_value = "50,100,150,200,250,300,350,400,450,500")]
        k_list: Vec<usize>,
        #[arg(long, default_value_t = 5)]
        trials: u64,
        #[arg(long, default_value_t = 10_000)]
        horizon: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Restrict to these policies (comma-separated kinds).
        #[arg(long, value_delimiter = ',')]
        policies: Option<Vec<String>>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Resolve a config and print its arms and expected rewards without running.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
}

fn quiet() -> bool {
    std::env::var("POSTPRICE_QUIET").is_ok_and(|v| !v.is_empty() && v != "0")
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run { config, out, seed, parallelism, checkpoints } => {
            let report = commands::run(&RunOptions { config, out, parallelism, seed, checkpoints })?;
            if !quiet() {
                print!("{}", commands::summarize(&report));
                for f in &report.files {
                    println!("wrote {}", f.display());
                }
            }
        }
        Command::BenchTiming { k_list, trials, horizon, seed, policies, out } => {
            let mut opts = BenchOptions::new(k_list, trials, horizon);
            opts.seed = seed;
            if let Some(names) = policies {
                opts.policies = names
                    .iter()
                    .map(|n| n.parse::<PolicyKind>().map(PolicySpec::new))
                    .collect::<Result<_, _>>()?;
            }
            let rows = commands::bench_timing(&opts, &out)?;
            if !quiet() {
                println!("{:<16} {:>6} {:>14} {:>14}", "policy", "K", "mean (s)", "std (s)");
                for r in rows {
                    println!("{:<16} {:>6} {:>14.6} {:>14.6}", r.policy, r.k, r.mean_seconds, r.std_seconds);
                }
                println!("wrote {}", out.display());
            }
        }
        Command::Validate { config } => print!("{}", commands::validate(&config)?),
    }
    Ok(())
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
