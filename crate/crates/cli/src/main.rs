//! `raymimo` command-line interface.
//!
//! Exit status: 0 success, 1 I/O failure on outputs, 2 usage error,
//! 3 config error, 4 dataset error (missing manifest, version mismatch,
//! parse error), 5 synthesis error, 6 beam error, 7 estimation error,
//! 8 dataset validation found errors.

mod commands;
mod config;
mod error;
mod provenance;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use raymimo::synthesis::Regime;

use crate::error::CliError;

const EXIT_CODES: &str = "Exit status:
  0  success
  1  I/O failure writing outputs
  2  usage error
  3  config error (message names the offending field)
  4  dataset error: missing manifest, version mismatch, parse error
  5  synthesis error, e.g. spherical regime without interaction points
  6  beam labeling or scoring error
  7  channel estimation error
  8  dataset validation found errors";

#[derive(Debug, Parser)]
#[command(name = "raymimo", version, about = "Geometric MIMO channel datasets: generation, synthesis, beams, estimation", after_help = EXIT_CODES)]
struct Cli {
    /// Worker threads; outputs do not depend on it. Defaults to all cores.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum RegimeArg {
    Planar,
    Spherical,
    Both,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build a dataset from the config's source and write it to OUT.
    Generate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Export channel tensors for one or both regimes.
    Synthesize {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides synthesis.regime from the config.
        #[arg(long, value_enum)]
        regime: Option<RegimeArg>,
    },
    /// Label best beam pairs and score the nearest-position baseline.
    Label {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// NMSE-vs-SNR sweep of the least-squares baseline, 1-bit and unquantized.
    Estimate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Time and size both regimes per channel.
    Bench {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Check a config, a dataset, or both.
    Validate {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        dataset: Option<PathBuf>,
    },
    /// Print dataset characteristics.
    Summary {
        #[arg(long)]
        dataset: PathBuf,
    },
}

fn run(cli: Cli) -> Result<String, CliError> {
    match cli.command {
        Command::Generate { config, out } => commands::generate(&config::load(&config)?, &out),
        Command::Synthesize {
            config,
            dataset,
            out,
            regime,
        } => {
            let cfg = config::load(&config)?;
            let regimes = match regime {
                None => vec![cfg.config.synthesis.regime],
                Some(RegimeArg::Planar) => vec![Regime::Planar],
                Some(RegimeArg::Spherical) => vec![Regime::Spherical],
                Some(RegimeArg::Both) => vec![Regime::Planar, Regime::Spherical],
            };
            commands::synthesize(&cfg, &dataset, &out, &regimes)
        }
        Command::Label { config, dataset, out } => commands::label(&config::load(&config)?, &dataset, &out),
        Command::Estimate { config, dataset, out } => commands::estimate(&config::load(&config)?, &dataset, &out),
        Command::Bench { config, dataset, out } => commands::bench(&config::load(&config)?, &dataset, &out),
        Command::Validate { config, dataset } => {
            if config.is_none() && dataset.is_none() {
                return Err(CliError::Config {
                    path: "<args>".into(),
                    message: "pass --config, --dataset, or both".into(),
                });
            }
            let cfg = config.as_deref().map(config::load).transpose()?;
            commands::validate(cfg.as_ref(), dataset.as_deref())
        }
        Command::Summary { dataset } => commands::summary(&dataset),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot start {n} threads: {e}");
            return ExitCode::from(1);
        }
    }
    match run(cli) {
        Ok(msg) => {
            if !msg.is_empty() {
                println!("{msg}");
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error [{}]: {e}", e.code());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
