use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use fpo_cli::{aggregate, plot, run, ExperimentConfig, Summary};

#[derive(Parser)]
#[command(
    name = "fpo",
    version,
    about = "Fingerprint policy optimisation experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train every seed of an experiment and write its histories.
    Run {
        config: PathBuf,
        /// Output root; overrides FPO_OUTPUT_ROOT and the config.
        #[arg(long)]
        output_root: Option<PathBuf>,
    },
    /// Summarise run directories into quartiles and median curves.
    Aggregate {
        #[arg(required = true)]
        dirs: Vec<PathBuf>,
        #[arg(long, short, default_value = "summary.json")]
        out: PathBuf,
    },
    /// Draw charts from a summary.
    Plot {
        summary: PathBuf,
        #[arg(long, short, default_value = ".")]
        out_dir: PathBuf,
    },
    /// Check a config without running it and print it with defaults filled in.
    Validate { config: PathBuf },
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Run {
            config,
            output_root,
        } => {
            let cfg = ExperimentConfig::load(&config)?;
            let root = output_root.unwrap_or_else(|| run::output_root(&cfg));
            let out = run(&cfg, &root).with_context(|| format!("running {}", config.display()))?;
            println!("{}", out.dir.display());
        }
        Command::Aggregate { dirs, out } => {
            let summary = aggregate(&dirs)?;
            summary.save(&out)?;
            for m in &summary.methods {
                println!(
                    "{:<24} Q1 {:>10.2}  median {:>10.2}  Q3 {:>10.2}",
                    m.label, m.q1, m.median, m.q3
                );
            }
        }
        Command::Plot { summary, out_dir } => {
            let summary = Summary::load(&summary)?;
            for path in plot::plot(&summary, &out_dir)? {
                println!("{}", path.display());
            }
        }
        Command::Validate { config } => {
            let cfg = ExperimentConfig::load(&config)?;
            print!("{}", cfg.to_toml());
        }
    }
    Ok(())
}
