//! Batch-experiment orchestration behind the CLI subcommands.
//!
//! Every command derives its randomness from the config seed through fixed
//! substream tags, runs strictly sequentially inside a run, and writes CSVs
//! from a single writer, so reruns with the same config are byte-identical
//! (wall-time columns excepted, since those measure the actual run).
//!
//! Output schemas (UTF-8, LF, header row, shortest round-trip floats):
//!
//! - `trajectory.csv`: `t,x_true,y,is_outlier,n_true`
//! - `estimates.csv`: `t,x_true,y,x_est,m,K,ess,pi` with `pi` a
//!   semicolon-joined probability vector, followed by `# mse=` and
//!   `# wall_time_s=` footer lines
//! - `kl_curves.csv`: `run_id,i,kl,mean_kl`
//! - `mse_summary.csv`: `po,algorithm,mean_mse,var_mse,mean_wall_time_s`

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;

use crate::benchmark::{as_system_model, simulate, Trajectory};
use crate::config::{Algorithm, ExperimentConfig};
use crate::error::{Error, Result};
use crate::filter::{run_baseline_pf, run_dpm_rpf, FilterRun};
use crate::metrics::{aggregate, kl_experiment, mean_kl_curve, mse, AggregateSummary, RunResult};
use crate::rng::SeedStream;

// Per-command substream tags off the root seed.
const STREAM_SIMULATE: u64 = 0;
const STREAM_FILTER: u64 = 1;
const STREAM_KL: u64 = 2;
const STREAM_SWEEP: u64 = 3;

/// Simulate one trajectory and write `trajectory.csv`; returns the path.
pub fn cmd_simulate(config: &ExperimentConfig, out_dir: &Path) -> Result<PathBuf> {
    config.validate()?;
    let scenario = config.time_series(config.sim.outlier_prob)?;
    let mut rng = SeedStream::new(config.seed).derive(STREAM_SIMULATE);
    let trajectory = simulate(&scenario, &mut rng)?;
    let path = out_dir.join("trajectory.csv");
    trajectory.write_csv(&path)?;
    Ok(path)
}

/// Filter a trajectory CSV with the configured algorithm and write
/// `estimates.csv` (per-step records plus an MSE / wall-time footer).
pub fn cmd_filter(
    config: &ExperimentConfig,
    trajectory_path: &Path,
    out_dir: &Path,
) -> Result<PathBuf> {
    config.validate()?;
    let trajectory = Trajectory::read_csv(trajectory_path)?;
    let scenario = config.time_series(config.sim.outlier_prob)?;
    let model = as_system_model(&scenario)?;
    let measurements = trajectory.measurement_vectors();
    let mut rng = SeedStream::new(config.seed).derive(STREAM_FILTER);

    let started = Instant::now();
    let run = match config.algorithm {
        Algorithm::DpmRpf => run_dpm_rpf(&model, &measurements, &config.filter_config()?, &mut rng)?,
        Algorithm::BaselinePf => run_baseline_pf(&model, &measurements, config.particles, &mut rng)?,
    };
    let wall_time_s = started.elapsed().as_secs_f64();

    let estimates: Vec<f64> = run.estimates.iter().map(|e| e[0]).collect();
    let run_mse = mse(&estimates, &trajectory.states)?;

    let path = out_dir.join("estimates.csv");
    let mut w = BufWriter::new(File::create(&path)?);
    w.write_all(b"t,x_true,y,x_est,m,K,ess,pi\n")?;
    for (idx, diag) in run.diagnostics.iter().enumerate() {
        let pi = diag
            .posterior
            .iter()
            .map(|p| format!("{p:?}"))
            .collect::<Vec<_>>()
            .join(";");
        writeln!(
            w,
            "{},{:?},{:?},{:?},{},{},{:?},{}",
            diag.t,
            trajectory.states[idx],
            trajectory.measurements[idx],
            estimates[idx],
            diag.selected,
            diag.clusters,
            diag.ess,
            pi
        )?;
    }
    writeln!(w, "# mse={run_mse:?}")?;
    writeln!(w, "# wall_time_s={wall_time_s:?}")?;
    w.flush()?;
    Ok(path)
}

/// Run the outlier-model KL experiment and write `kl_curves.csv` with a mean
/// column across runs.
pub fn cmd_kl(config: &ExperimentConfig, out_dir: &Path) -> Result<PathBuf> {
    config.validate()?;
    let kl_config = config.kl_config()?;
    let mixture = config.outlier_mixture()?;
    let rng = SeedStream::new(config.seed).derive(STREAM_KL);
    let curves = kl_experiment(&kl_config, &mixture, &rng)?;
    let mean = mean_kl_curve(&curves)?;

    let path = out_dir.join("kl_curves.csv");
    let mut w = BufWriter::new(File::create(&path)?);
    w.write_all(b"run_id,i,kl,mean_kl\n")?;
    for (run_id, curve) in curves.iter().enumerate() {
        for &(i, kl) in &curve.points {
            writeln!(w, "{run_id},{i},{kl:?},{:?}", mean[i - 1])?;
        }
    }
    w.flush()?;
    Ok(path)
}

/// One (contamination level, algorithm) cell of the MSE sweep.
#[derive(Debug, Clone)]
pub struct SweepRow {
    pub outlier_prob: f64,
    pub algorithm: Algorithm,
    pub summary: AggregateSummary,
    /// Fraction of steps that selected the standard-noise hypothesis,
    /// averaged over runs.
    pub mean_standard_fraction: f64,
}

/// Execute the full sweep grid: for every configured contamination level,
/// `config.runs` trajectories are simulated on derived substreams and every
/// configured algorithm filters the same trajectories (paired comparison,
/// separate filter streams). Runs inside a cell execute in parallel;
/// everything is deterministic in the root seed except the measured wall
/// times.
pub fn mse_sweep(config: &ExperimentConfig) -> Result<Vec<SweepRow>> {
    config.validate()?;
    let root = SeedStream::new(config.seed).derive(STREAM_SWEEP);
    let mut rows = Vec::new();
    for (po_idx, &po) in config.sweep.outlier_probs.iter().enumerate() {
        let scenario = config.time_series(po)?;
        let cell = root.derive(po_idx as u64);
        let outcome = (0..config.runs)
            .into_par_iter()
            .map(|run_idx| -> Result<(Vec<(RunResult, f64)>, Vec<f64>)> {
                let run_stream = cell.derive(run_idx as u64);
                let mut sim_rng = run_stream.derive(0);
                let trajectory = simulate(&scenario, &mut sim_rng)?;
                let model = as_system_model(&scenario)?;
                let measurements = trajectory.measurement_vectors();
                let mut per_algorithm = Vec::with_capacity(config.algorithms.len());
                for (alg_idx, &algorithm) in config.algorithms.iter().enumerate() {
                    let mut filter_rng = run_stream.derive(1 + alg_idx as u64);
                    let started = Instant::now();
                    let run: FilterRun = match algorithm {
                        Algorithm::DpmRpf => run_dpm_rpf(
                            &model,
                            &measurements,
                            &config.filter_config()?,
                            &mut filter_rng,
                        )?,
                        Algorithm::BaselinePf => run_baseline_pf(
                            &model,
                            &measurements,
                            config.particles,
                            &mut filter_rng,
                        )?,
                    };
                    let wall_time_s = started.elapsed().as_secs_f64();
                    let standard_fraction = run
                        .diagnostics
                        .iter()
                        .filter(|d| d.selected == 0)
                        .count() as f64
                        / run.diagnostics.len() as f64;
                    per_algorithm.push((
                        RunResult {
                            estimates: run.estimates.iter().map(|e| e[0]).collect(),
                            diagnostics: run.diagnostics,
                            wall_time_s,
                            seed: run_stream.seed(),
                        },
                        standard_fraction,
                    ));
                }
                Ok((per_algorithm, trajectory.states))
            })
            .collect::<Result<Vec<_>>>()?;

        for (alg_idx, &algorithm) in config.algorithms.iter().enumerate() {
            let results: Vec<RunResult> = outcome
                .iter()
                .map(|(per_alg, _)| per_alg[alg_idx].0.clone())
                .collect();
            let truths: Vec<Vec<f64>> = outcome.iter().map(|(_, t)| t.clone()).collect();
            let mean_standard_fraction = outcome
                .iter()
                .map(|(per_alg, _)| per_alg[alg_idx].1)
                .sum::<f64>()
                / outcome.len() as f64;
            rows.push(SweepRow {
                outlier_prob: po,
                algorithm,
                summary: aggregate(&results, &truths)?,
                mean_standard_fraction,
            });
        }
    }
    Ok(rows)
}

/// Run [`mse_sweep`] and write `mse_summary.csv`.
pub fn cmd_mse_sweep(config: &ExperimentConfig, out_dir: &Path) -> Result<PathBuf> {
    let rows = mse_sweep(config)?;
    let path = out_dir.join("mse_summary.csv");
    write_mse_summary(&rows, &path)?;
    Ok(path)
}

pub fn write_mse_summary(rows: &[SweepRow], path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(b"po,algorithm,mean_mse,var_mse,mean_wall_time_s\n")?;
    for row in rows {
        writeln!(
            w,
            "{:?},{},{:?},{:?},{:?}",
            row.outlier_prob,
            row.algorithm,
            row.summary.mean_mse,
            row.summary.var_mse,
            row.summary.mean_wall_time_s
        )?;
    }
    w.flush()?;
    Ok(())
}

/// Map I/O errors on an output directory to a clearer message.
pub fn ensure_out_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| {
        Error::Config(format!("cannot create output directory {}: {e}", dir.display()))
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_config() -> ExperimentConfig {
        let mut config = ExperimentConfig::default();
        config.seed = 11;
        config.horizon = 60;
        config.runs = 2;
        config.particles = 40;
        config.kl.runs = 2;
        config.kl.n_outliers = 12;
        config.kl.samples = 400;
        config.sweep.outlier_probs = vec![0.0, 0.5];
        config
    }

    #[test]
    fn simulate_writes_header_plus_horizon_rows() {
        let dir = tempfile::tempdir().unwrap();
        let config = ExperimentConfig {
            horizon: 600,
            ..tiny_config()
        };
        let path = cmd_simulate(&config, dir.path()).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 601);
        assert!(text.starts_with("t,x_true,y,is_outlier,n_true\n"));
    }

    #[test]
    fn simulate_with_zero_contamination_has_no_outliers() {
        let dir = tempfile::tempdir().unwrap();
        let mut config = tiny_config();
        config.sim.outlier_prob = 0.0;
        let path = cmd_simulate(&config, dir.path()).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        for line in text.lines().skip(1) {
            assert_eq!(line.split(',').nth(3), Some("false"));
        }
    }

    #[test]
    fn simulate_reruns_byte_identically() {
        let dir = tempfile::tempdir().unwrap();
        let config = tiny_config();
        let path = cmd_simulate(&config, dir.path()).unwrap();
        let first = std::fs::read(&path).unwrap();
        let path = cmd_simulate(&config, dir.path()).unwrap();
        let second = std::fs::read(&path).unwrap();
        assert_eq!(first, second);
    }

    #[test]
    fn filter_emits_rows_and_consistent_footer() {
        let dir = tempfile::tempdir().unwrap();
        let config = tiny_config();
        let trajectory_path = cmd_simulate(&config, dir.path()).unwrap();
        let path = cmd_filter(&config, &trajectory_path, dir.path()).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let data_rows = text
            .lines()
            .filter(|l| !l.starts_with('#') && !l.starts_with("t,"))
            .count();
        assert_eq!(data_rows, config.horizon);

        // Footer MSE equals a recomputation from the columns.
        let mut estimates = Vec::new();
        let mut truths = Vec::new();
        for line in text.lines().skip(1) {
            if line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            truths.push(fields[1].parse::<f64>().unwrap());
            estimates.push(fields[3].parse::<f64>().unwrap());
        }
        let recomputed = mse(&estimates, &truths).unwrap();
        let footer = text
            .lines()
            .find(|l| l.starts_with("# mse="))
            .unwrap()
            .trim_start_matches("# mse=")
            .parse::<f64>()
            .unwrap();
        assert_eq!(footer, recomputed);
        assert!(text.lines().any(|l| l.starts_with("# wall_time_s=")));
    }

    #[test]
    fn filter_baseline_dispatch() {
        let dir = tempfile::tempdir().unwrap();
        let mut config = tiny_config();
        let trajectory_path = cmd_simulate(&config, dir.path()).unwrap();
        config.algorithm = Algorithm::BaselinePf;
        let path = cmd_filter(&config, &trajectory_path, dir.path()).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        // The baseline never leaves hypothesis 0 and keeps K = 0.
        for line in text.lines().skip(1).filter(|l| !l.starts_with('#')) {
            let fields: Vec<&str> = line.split(',').collect();
            assert_eq!(fields[4], "0");
            assert_eq!(fields[5], "0");
        }
    }

    #[test]
    fn filter_reports_malformed_input_line() {
        let dir = tempfile::tempdir().unwrap();
        let bad = dir.path().join("bad.csv");
        std::fs::write(&bad, "t,x_true,y,is_outlier,n_true\n1,a,b,c,d\n").unwrap();
        match cmd_filter(&tiny_config(), &bad, dir.path()) {
            Err(Error::ParseCsv { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn kl_command_writes_mean_column() {
        let dir = tempfile::tempdir().unwrap();
        let config = tiny_config();
        let path = cmd_kl(&config, dir.path()).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("run_id,i,kl,mean_kl\n"));
        // 2 runs x 12 outliers data rows.
        assert_eq!(text.lines().count(), 1 + 24);

        // The mean column at a fixed index is the average of the kl column.
        let rows: Vec<Vec<String>> = text
            .lines()
            .skip(1)
            .map(|l| l.split(',').map(str::to_string).collect())
            .collect();
        let at_index_3: Vec<&Vec<String>> = rows.iter().filter(|r| r[1] == "3").collect();
        let kl_mean: f64 = at_index_3
            .iter()
            .map(|r| r[2].parse::<f64>().unwrap())
            .sum::<f64>()
            / at_index_3.len() as f64;
        let reported: f64 = at_index_3[0][3].parse().unwrap();
        assert!((kl_mean - reported).abs() < 1e-12);
    }

    #[test]
    fn sweep_covers_grid_and_reports_positive_wall_time() {
        let dir = tempfile::tempdir().unwrap();
        let config = tiny_config();
        let path = cmd_mse_sweep(&config, dir.path()).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        // 2 po x 2 algorithms.
        assert_eq!(text.lines().count(), 1 + 4);
        for line in text.lines().skip(1) {
            let fields: Vec<&str> = line.split(',').collect();
            assert_eq!(fields.len(), 5);
            assert!(fields[4].parse::<f64>().unwrap() > 0.0);
        }
    }

    #[test]
    fn sweep_rows_are_deterministic_up_to_timing() {
        let config = tiny_config();
        let a = mse_sweep(&config).unwrap();
        let b = mse_sweep(&config).unwrap();
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.outlier_prob, y.outlier_prob);
            assert_eq!(x.algorithm, y.algorithm);
            assert_eq!(x.summary.mean_mse, y.summary.mean_mse);
            assert_eq!(x.summary.var_mse, y.summary.var_mse);
            assert_eq!(x.mean_standard_fraction, y.mean_standard_fraction);
        }
    }
}
