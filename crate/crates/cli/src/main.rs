// SPDX-License-Identifier: MIT

//! `edge-faas-sim`: runs and validates simulation experiments.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use edge_faas::{load_config, run_experiment, ConfigError, ExperimentConfig};

const EXIT_CONFIG: u8 = 1;
const EXIT_RUNTIME: u8 = 2;

#[derive(Parser)]
#[command(
    name = "edge-faas-sim",
    about = "Stateful FaaS execution models at the edge"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment grid of a configuration.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory; overrides `out`.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Base seed; overrides `seed`.
        #[arg(long)]
        seed: Option<u64>,
        /// Replications per cell; overrides `replications`.
        #[arg(long)]
        replications: Option<usize>,
        /// Write per-step traces; overrides `trace`.
        #[arg(long)]
        trace: bool,
    },
    /// Check a configuration without running it.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Print the version.
    Version,
}

fn with_overrides(
    config: ExperimentConfig,
    out: Option<PathBuf>,
    seed: Option<u64>,
    replications: Option<usize>,
    trace: bool,
) -> Result<ExperimentConfig, ConfigError> {
    let mut doc = config.document;
    if let Some(out) = out {
        doc.out = out;
    }
    if let Some(seed) = seed {
        doc.seed = seed;
    }
    if let Some(r) = replications {
        doc.replications = r;
    }
    doc.trace |= trace;
    ExperimentConfig::from_document(doc)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match cli.command {
        Command::Version => {
            println!("edge-faas-sim {}", edge_faas::VERSION);
            ExitCode::SUCCESS
        }
        Command::Validate { config } => match load_config(&config) {
            Ok(cfg) => {
                println!(
                    "{}: ok, {} cells x {} replications",
                    config.display(),
                    cfg.grid_size(),
                    cfg.document.replications
                );
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(EXIT_CONFIG)
            }
        },
        Command::Run {
            config,
            out,
            seed,
            replications,
            trace,
        } => {
            let cfg = match load_config(&config)
                .and_then(|c| with_overrides(c, out, seed, replications, trace))
            {
                Ok(cfg) => cfg,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(EXIT_CONFIG);
                }
            };
            eprintln!(
                "running {} cells x {} replications",
                cfg.grid_size(),
                cfg.document.replications
            );
            match run_experiment(&cfg) {
                Ok(outcome) => {
                    println!("{}", outcome.results_csv.display());
                    println!("{}", outcome.summary_csv.display());
                    println!("{}", outcome.manifest.display());
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(EXIT_RUNTIME)
                }
            }
        }
    }
}
