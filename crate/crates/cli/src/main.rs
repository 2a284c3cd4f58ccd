//! `coexsim`: co-channel coexistence experiments for ITS-G5 (802.11p) and
//! LTE-V2X sidelink mode 4 on one 10 MHz channel.

mod config;
mod output;
mod runner;
mod svg;

use anyhow::Result;
use clap::Parser;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use config::Overrides;

/// Coexistence simulator and free-flow reception model for 802.11p and
/// LTE-V2X sidelink mode 4 sharing a 10 MHz ITS channel.
#[derive(Debug, Parser)]
#[command(name = "coexsim", version, about, max_term_width = 100)]
struct Cli {
    /// Experiment to run: a preset (fig4a, fig4b, fig5, fig6, fig7, table2),
    /// `custom` (one simulated point shaped by --mode/--density), or the
    /// path of a previously emitted metadata.toml to reproduce that run.
    target: String,

    /// Simulation seed; repeat for several runs per point (default: 1 2 3).
    #[arg(long = "seed", value_name = "N")]
    seeds: Vec<u64>,

    /// Measured duration per simulation run in seconds (default: 30).
    #[arg(long, value_name = "S")]
    duration: Option<f64>,

    /// Per-technology station density in vehicles/km (custom runs).
    #[arg(long, value_name = "D")]
    density: Option<f64>,

    /// Coexistence mode for custom runs (e.g. legacy, preamble,
    /// preamble-modcc; see README for the full list).
    #[arg(long, value_name = "M")]
    mode: Option<String>,

    /// Output directory (default: out/<preset>).
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,

    /// Verify the run's acceptance gates; exit nonzero on any failure.
    #[arg(long)]
    check: bool,

    /// Worker threads for independent (point, seed) jobs (default: all
    /// cores). Results are identical for any value.
    #[arg(long, value_name = "N")]
    workers: Option<usize>,

    /// Monte Carlo trials per analytic sweep point (default: 1000000).
    #[arg(long, value_name = "N")]
    trials: Option<u64>,
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    let target_path = Path::new(&cli.target);
    let from_metadata = cli.target.ends_with(".toml") && target_path.is_file();
    let mut cfg = if from_metadata {
        config::load_metadata(target_path)?
    } else {
        config::preset(&cli.target)?
    };
    cfg.apply(&Overrides {
        seeds: cli.seeds,
        duration_s: cli.duration,
        density_per_km: cli.density,
        mode: cli.mode,
        trials: cli.trials,
    })?;

    let out_dir = cli
        .out
        .unwrap_or_else(|| PathBuf::from("out").join(&cfg.preset));
    let workers = cli.workers.unwrap_or(0);

    let outcome = runner::run_experiment(&cfg, &out_dir, workers, cli.check)?;
    for f in &outcome.files {
        println!("wrote {}", f.display());
    }
    if outcome.failures.is_empty() {
        Ok(ExitCode::SUCCESS)
    } else {
        eprintln!("{} check(s) failed", outcome.failures.len());
        Ok(ExitCode::from(2))
    }
}
