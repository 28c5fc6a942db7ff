//! Batch-experiment command line front end.
//!
//! Flag precedence: command-line flags override the `DPM_RPF_OUT_DIR`
//! environment variable (output directory only), which overrides the config
//! file, which overrides built-in defaults.

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use dpm_rpf::config::{Algorithm, ExperimentConfig};
use dpm_rpf::runner;

#[derive(Parser)]
#[command(
    name = "dpm-rpf",
    version,
    about = "Robust particle filtering experiments with a learned outlier model"
)]
struct Cli {
    /// TOML config file; omitted sections use built-in defaults.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Root random seed.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,

    /// Output directory.
    #[arg(long, global = true, value_name = "DIR", env = "DPM_RPF_OUT_DIR")]
    out: Option<PathBuf>,

    /// Outlier probability (simulate/filter; restricts mse-sweep to one value).
    #[arg(long, global = true, value_name = "X")]
    po: Option<f64>,

    /// Filter algorithm (filter; restricts mse-sweep to one algorithm).
    #[arg(long, global = true, value_name = "NAME")]
    algorithm: Option<Algorithm>,

    /// Independent runs per sweep cell / KL experiment.
    #[arg(long, global = true, value_name = "N")]
    runs: Option<usize>,

    /// Particle count.
    #[arg(long, global = true, value_name = "N")]
    particles: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one trajectory and write trajectory.csv.
    Simulate,
    /// Run a filter over a trajectory CSV and write estimates.csv.
    Filter {
        /// Input trajectory CSV (as written by `simulate`).
        #[arg(long, value_name = "PATH")]
        trajectory: PathBuf,
    },
    /// Run the outlier-model KL experiment and write kl_curves.csv.
    Kl,
    /// Sweep contamination levels x algorithms and write mse_summary.csv.
    MseSweep,
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    if let Err(e) = run() {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}

fn run() -> dpm_rpf::Result<()> {
    let cli = Cli::parse();

    let mut config = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(po) = cli.po {
        config.sim.outlier_prob = po;
        config.sweep.outlier_probs = vec![po];
    }
    if let Some(algorithm) = cli.algorithm {
        config.algorithm = algorithm;
        config.algorithms = vec![algorithm];
    }
    if let Some(runs) = cli.runs {
        config.runs = runs;
        config.kl.runs = runs;
    }
    if let Some(particles) = cli.particles {
        config.particles = particles;
    }
    config.validate()?;

    let out_dir = cli
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from(&config.output_dir));
    runner::ensure_out_dir(&out_dir)?;

    let written = match &cli.command {
        Command::Simulate => runner::cmd_simulate(&config, &out_dir)?,
        Command::Filter { trajectory } => runner::cmd_filter(&config, trajectory, &out_dir)?,
        Command::Kl => runner::cmd_kl(&config, &out_dir)?,
        Command::MseSweep => runner::cmd_mse_sweep(&config, &out_dir)?,
    };
    println!("{}", written.display());
    Ok(())
}
