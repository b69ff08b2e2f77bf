//! `sonata` command line: run, list and validate experiments.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use sonata_harness::experiment::{write_summary, HarnessError};
use sonata_harness::presets::{preset_text, PRESETS};
use sonata_harness::{load_config, simulate, ExperimentConfig};

const CONFIG_ERROR: u8 = 2;
const RUNTIME_ERROR: u8 = 3;

#[derive(Parser)]
#[command(name = "sonata", version, about = "Distributed nonconvex optimization experiments")]
struct Cli {
    /// Suppress progress output.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment file and write trace and aggregate CSVs.
    Run {
        config: PathBuf,
        /// Override the number of trials.
        #[arg(long)]
        trials: Option<usize>,
        /// Override the base seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// List the built-in experiments, or print one with --show.
    Presets {
        #[arg(long)]
        show: Option<String>,
    },
    /// Check an experiment file without running it.
    Validate {
        config: PathBuf,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load(path: &PathBuf, trials: Option<usize>, seed: Option<u64>, out: Option<PathBuf>) -> Result<ExperimentConfig, ExitCode> {
    let mut cfg = load_config(path).map_err(|e| {
        eprintln!("error: {e}");
        ExitCode::from(CONFIG_ERROR)
    })?;
    cfg.trials = trials.unwrap_or(cfg.trials);
    cfg.base_seed = seed.unwrap_or(cfg.base_seed);
    cfg.output = out.unwrap_or(cfg.output);
    cfg.validate().map_err(|e| {
        eprintln!("error: {e}");
        ExitCode::from(CONFIG_ERROR)
    })?;
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Presets { show: None } => {
            for (name, _) in PRESETS {
                println!("{name}");
            }
            ExitCode::SUCCESS
        }
        Command::Presets { show: Some(name) } => match preset_text(&name) {
            Some(text) => {
                print!("{text}");
                ExitCode::SUCCESS
            }
            None => {
                eprintln!("error: unknown preset {name:?}");
                ExitCode::from(CONFIG_ERROR)
            }
        },
        Command::Validate { config, trials, seed, out } => match load(&config, trials, seed, out) {
            Ok(cfg) => {
                if !cli.quiet {
                    println!("{}: ok ({} methods, {} trials)", cfg.name, cfg.algorithms.len(), cfg.trials);
                }
                ExitCode::SUCCESS
            }
            Err(code) => code,
        },
        Command::Run { config, trials, seed, out } => {
            let cfg = match load(&config, trials, seed, out) {
                Ok(c) => c,
                Err(code) => return code,
            };
            if !cli.quiet {
                eprintln!(
                    "running {}: {} trials x {} methods, {} iterations",
                    cfg.name,
                    cfg.trials,
                    cfg.algorithms.len(),
                    cfg.n_iters
                );
            }
            let result = simulate(&cfg).and_then(|s| write_summary(&cfg.output, &s).map(|files| (s, files)));
            match result {
                Ok((summary, files)) => {
                    if !cli.quiet {
                        for m in &summary.methods {
                            if let Some(last) = m.aggregate.last() {
                                println!(
                                    "{}: iter {} mean log10 J {:.3} mean log10 D {:.3}",
                                    m.name, last.iter, last.mean_log10_j, last.mean_log10_d
                                );
                            }
                        }
                        println!("wrote {} files to {}", files.len(), cfg.output.display());
                    }
                    ExitCode::SUCCESS
                }
                Err(e @ HarnessError::Config(_)) => {
                    eprintln!("error: {e}");
                    ExitCode::from(CONFIG_ERROR)
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(RUNTIME_ERROR)
                }
            }
        }
    }
}
