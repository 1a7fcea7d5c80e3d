//! `apo`: generate task corpora, train, and plot training metrics.
//!
//! Exit codes: 0 success, 2 usage or config error, 3 write failure,
//! 4 missing or unusable input.

mod corpus;
mod error;
mod plot;
mod settings;
mod svg;
mod train;

use std::path::PathBuf;
use std::process::ExitCode;

use apo_core::TaskFamily;
use clap::{Parser, Subcommand, ValueEnum};

use crate::error::{CliError, CliResult};

#[derive(Parser)]
#[command(name = "apo", version, about = "Train small policies on verifiable synthetic tasks")]
struct Cli {
    /// Root for every path the command reads or writes.
    #[arg(long, global = true, default_value = ".")]
    out_dir: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Ablation {
    /// Five runs toggling the KL penalty, difficulty-aware KL scaling and
    /// length regularization.
    Table2,
}

#[derive(Subcommand)]
enum Command {
    /// Write a JSONL task corpus.
    GenCorpus {
        #[arg(long, default_value = "modular-chain")]
        family: TaskFamily,
        /// `a..b` (inclusive), `a..=b`, or a comma list.
        #[arg(long)]
        tiers: String,
        #[arg(long)]
        per_tier: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "corpus.jsonl")]
        output: PathBuf,
    },
    /// Train one run, or every ablation run, and record metrics.
    Train {
        /// TOML config; keys can also be set through `APO_<KEY>`.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 200)]
        steps: u64,
        #[arg(long, default_value = "run")]
        run_name: String,
        #[arg(long, value_enum)]
        ablation: Option<Ablation>,
        /// Continue from the run's checkpoint up to `--steps`.
        #[arg(long)]
        resume: bool,
        /// Train ablation runs on separate threads.
        #[arg(long)]
        parallel: bool,
    },
    /// Plot a run's metrics, or overlay the length gap of two runs.
    Plot {
        #[arg(long, default_value = "run", conflicts_with = "compare")]
        run: String,
        #[arg(long, num_args = 2, value_names = ["RUN_A", "RUN_B"])]
        compare: Option<Vec<String>>,
    },
    /// Print a config file with every key at its default.
    Config,
}

fn execute(cli: Cli) -> CliResult<()> {
    let out_dir = cli.out_dir;
    match cli.command {
        Command::GenCorpus { family, tiers, per_tier, seed, output } => {
            let tiers = corpus::parse_tiers(&tiers).map_err(|e| CliError::usage(format!("--tiers: {e}")))?;
            let counts = corpus::run(&corpus::GenCorpus {
                family,
                tiers: &tiers,
                per_tier,
                seed,
                out_dir: &out_dir,
                output: &output,
            })?;
            for (tier, n) in &counts {
                println!("tier {tier}: {n}");
            }
            let total: usize = counts.iter().map(|c| c.1).sum();
            println!("total: {total} -> {}", output.display());
        }
        Command::Train { config, steps, run_name, ablation, resume, parallel } => {
            let settings = settings::load(config.as_deref(), &settings::process_env())?;
            let outcomes = train::run(&train::TrainArgs {
                settings: &settings,
                out_dir: &out_dir,
                run_name: &run_name,
                steps,
                resume,
                ablation: ablation.is_some(),
                parallel,
            })?;
            for o in &outcomes {
                let fmt = |x: Option<f64>| x.map_or("-".to_string(), |v| format!("{v:.4}"));
                println!(
                    "{}: steps {}..{} config {} final accuracy {} max gap {}",
                    o.name,
                    o.start_step,
                    steps,
                    &o.config_hash[..12],
                    fmt(train::final_accuracy(&o.rows)),
                    fmt(train::max_gap(&o.rows)),
                );
            }
        }
        Command::Plot { run, compare } => {
            let written = match compare {
                Some(pair) => plot::plot_compare(&out_dir, &pair[0], &pair[1])?,
                None => plot::plot_run(&out_dir, &run)?,
            };
            for p in written {
                println!("{}", p.display());
            }
        }
        Command::Config => print!("{}", settings::template()),
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError { code, message }) => {
            eprintln!("error: {message}");
            ExitCode::from(code)
        }
    }
}
