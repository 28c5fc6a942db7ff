//! Quantitative evaluation: state-estimate MSE, Monte Carlo KL divergence
//! between Gaussian mixtures, aggregation over independent runs, and the
//! standalone outlier-model inference experiment.

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dpm::{DpmModel, MixtureDensity};
use crate::error::{Error, Result};
use crate::filter::{RefineConfig, RefineTrigger, StepDiagnostics};
use crate::kernels::{sample_categorical, GaussianDensity, NiwParams};
use crate::rng::SeedStream;

/// Log-density floor applied to the approximating mixture inside [`mc_kl`];
/// samples hitting it are counted in [`KlEstimate::clamped_samples`].
pub const KL_LOG_FLOOR: f64 = -700.0;

/// One filtering run's outputs, as consumed by [`aggregate`].
#[derive(Debug, Clone)]
pub struct RunResult {
    /// Per-step state estimates.
    pub estimates: Vec<f64>,
    /// Per-step filter diagnostics.
    pub diagnostics: Vec<StepDiagnostics>,
    /// Wall-clock duration of the filtering pass, in seconds.
    pub wall_time_s: f64,
    /// Seed the run was started from.
    pub seed: u64,
}

/// Mean squared error between estimates and ground truth.
pub fn mse(estimates: &[f64], truth: &[f64]) -> Result<f64> {
    if estimates.len() != truth.len() {
        return Err(Error::LengthMismatch {
            left: estimates.len(),
            right: truth.len(),
        });
    }
    if estimates.is_empty() {
        return Err(Error::InvalidParameter("mse of empty sequences".into()));
    }
    let sum: f64 = estimates
        .iter()
        .zip(truth)
        .map(|(e, t)| (e - t) * (e - t))
        .sum();
    Ok(sum / estimates.len() as f64)
}

/// A Monte Carlo KL estimate with its sampling standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KlEstimate {
    pub value: f64,
    pub std_error: f64,
    /// Samples whose log-density under `q` was clamped at [`KL_LOG_FLOOR`].
    pub clamped_samples: usize,
}

/// Monte Carlo estimate of `KL(p || q) = E_p[log p(s) - log q(s)]`, sampling
/// from `p`. Deterministic given the stream.
pub fn mc_kl(
    p: &MixtureDensity,
    q: &MixtureDensity,
    n_samples: usize,
    rng: &mut SeedStream,
) -> Result<KlEstimate> {
    if n_samples == 0 {
        return Err(Error::InvalidParameter("mc_kl needs n_samples >= 1".into()));
    }
    if p.dim() != q.dim() {
        return Err(Error::DimensionMismatch {
            expected: p.dim(),
            got: q.dim(),
        });
    }
    let p_eval = p.evaluator()?;
    let q_eval = q.evaluator()?;
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    let mut clamped = 0usize;
    for _ in 0..n_samples {
        let s = p_eval.sample(rng)?;
        let lp = p_eval.logpdf(&s)?;
        let mut lq = q_eval.logpdf(&s)?;
        if lq < KL_LOG_FLOOR {
            lq = KL_LOG_FLOOR;
            clamped += 1;
        }
        let diff = lp - lq;
        sum += diff;
        sum_sq += diff * diff;
    }
    let n = n_samples as f64;
    let mean = sum / n;
    let var = (sum_sq / n - mean * mean).max(0.0);
    Ok(KlEstimate {
        value: mean,
        std_error: (var / n).sqrt(),
        clamped_samples: clamped,
    })
}

/// Mean/variance summary over independent runs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AggregateSummary {
    pub mean_mse: f64,
    /// Unbiased sample variance of per-run MSE; zero (flagged) for one run.
    pub var_mse: f64,
    pub mean_wall_time_s: f64,
    /// True when only a single run was aggregated.
    pub degenerate: bool,
}

/// Aggregate per-run MSEs (each run scored against its own ground truth) and
/// wall times.
pub fn aggregate(results: &[RunResult], truths: &[Vec<f64>]) -> Result<AggregateSummary> {
    if results.is_empty() {
        return Err(Error::InvalidParameter("no runs to aggregate".into()));
    }
    if results.len() != truths.len() {
        return Err(Error::LengthMismatch {
            left: results.len(),
            right: truths.len(),
        });
    }
    let mses: Vec<f64> = results
        .iter()
        .zip(truths)
        .map(|(run, truth)| mse(&run.estimates, truth))
        .collect::<Result<_>>()?;
    let n = mses.len() as f64;
    let mean_mse = mses.iter().sum::<f64>() / n;
    let var_mse = if mses.len() == 1 {
        0.0
    } else {
        mses.iter().map(|m| (m - mean_mse) * (m - mean_mse)).sum::<f64>() / (n - 1.0)
    };
    let mean_wall_time_s = results.iter().map(|r| r.wall_time_s).sum::<f64>() / n;
    Ok(AggregateSummary {
        mean_mse,
        var_mse,
        mean_wall_time_s,
        degenerate: results.len() == 1,
    })
}

/// KL-vs-outlier-count curve of one inference run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KlCurve {
    /// `(outlier index, KL estimate)` pairs, indices strictly increasing.
    pub points: Vec<(usize, f64)>,
}

impl KlCurve {
    pub fn validate(&self) -> Result<()> {
        let mut prev = 0usize;
        for &(i, kl) in &self.points {
            if i <= prev {
                return Err(Error::InvalidParameter(format!(
                    "curve indices must be strictly increasing at {i}"
                )));
            }
            if !kl.is_finite() {
                return Err(Error::InvalidParameter(format!(
                    "non-finite KL estimate at index {i}"
                )));
            }
            prev = i;
        }
        Ok(())
    }
}

/// Configuration of the standalone outlier-model inference experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KlExperimentConfig {
    /// True outliers fed to each run.
    pub n_outliers: usize,
    /// Independent Monte Carlo runs.
    pub runs: usize,
    /// Samples per KL evaluation.
    pub kl_samples: usize,
    pub alpha: f64,
    pub base: NiwParams,
    pub refine: RefineConfig,
}

impl Default for KlExperimentConfig {
    fn default() -> Self {
        Self {
            n_outliers: 480,
            runs: 30,
            kl_samples: 10_000,
            alpha: 1.0,
            base: NiwParams::scalar(21.0, 1.0, 10.0, 5.0).expect("static parameters"),
            refine: RefineConfig::default(),
        }
    }
}

/// Feed true outlier draws straight into the allocation + refinement
/// pipeline (no filtering, no standard-noise hypothesis) and record the KL
/// divergence from the true mixture to the learned predictive mixture after
/// every outlier.
///
/// Each outlier is allocated by sampling from the seating posterior
/// `[n_1 g_1(o), ..., n_K g_K(o), alpha g_new(o)]`, where `g_new` is a fresh
/// prior draw; refinement runs whenever the store size hits a multiple of the
/// configured interval (subject to the trigger policy). Runs execute in
/// parallel over derived substreams, so the output is deterministic in the
/// root stream.
pub fn kl_experiment(
    config: &KlExperimentConfig,
    true_mixture: &MixtureDensity,
    rng: &SeedStream,
) -> Result<Vec<KlCurve>> {
    if config.n_outliers == 0 || config.runs == 0 {
        return Err(Error::InvalidParameter(
            "kl experiment needs runs >= 1 and n_outliers >= 1".into(),
        ));
    }
    true_mixture.validate()?;
    config.base.validate()?;
    (0..config.runs)
        .into_par_iter()
        .map(|run| {
            let run_stream = rng.derive(run as u64);
            kl_inference_run(config, true_mixture, &run_stream)
        })
        .collect()
}

fn kl_inference_run(
    config: &KlExperimentConfig,
    true_mixture: &MixtureDensity,
    run_stream: &SeedStream,
) -> Result<KlCurve> {
    let mut model_rng = run_stream.derive(0);
    let mut kl_rng = run_stream.derive(1);
    let truth = true_mixture.evaluator()?;
    let mut dpm = DpmModel::new(config.alpha, config.base.clone())?;
    let mut points = Vec::with_capacity(config.n_outliers);

    for i in 1..=config.n_outliers {
        let outlier = truth.sample(&mut model_rng)?;
        let k_before = dpm.num_clusters();
        let candidate = dpm.spawn_cluster(&mut model_rng)?;
        let selected = sample_seating(&dpm, &candidate.params, &outlier, &mut model_rng)?;
        if selected == k_before + 1 {
            dpm.commit_cluster(candidate)?;
        }
        dpm.allocate_existing(outlier, selected)?;

        let refine_now = dpm.outlier_count() % config.refine.interval == 0
            && match config.refine.trigger {
                RefineTrigger::SizeMultiple => true,
                RefineTrigger::NewClusterAndSizeMultiple => selected == k_before + 1,
            };
        if refine_now {
            dpm.gibbs_refine(config.refine.sweeps, &mut model_rng)?;
        }

        let learned = dpm.predictive_mixture()?;
        let kl = mc_kl(true_mixture, &learned, config.kl_samples, &mut kl_rng)?;
        points.push((i, kl.value));
    }
    let curve = KlCurve { points };
    curve.validate()?;
    Ok(curve)
}

/// Sample a seating decision for one known outlier: existing clusters weighted
/// by `n_k g_k(o)`, a new cluster by `alpha g_new(o)`.
fn sample_seating(
    dpm: &DpmModel,
    new_cluster: &crate::kernels::GaussianParams,
    outlier: &DVector<f64>,
    rng: &mut SeedStream,
) -> Result<usize> {
    let k = dpm.num_clusters();
    let mut log_weights = Vec::with_capacity(k + 1);
    for cluster in dpm.clusters() {
        let density = GaussianDensity::new(&cluster.params)?;
        log_weights.push((cluster.count as f64).ln() + density.logpdf(outlier)?);
    }
    log_weights.push(dpm.alpha().ln() + GaussianDensity::new(new_cluster)?.logpdf(outlier)?);
    let max = log_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = log_weights.iter().map(|lw| (lw - max).exp()).collect();
    Ok(sample_categorical(&weights, rng)? + 1)
}

/// Mean curve across runs: entry `i` averages every run's KL at index `i + 1`.
pub fn mean_kl_curve(curves: &[KlCurve]) -> Result<Vec<f64>> {
    if curves.is_empty() {
        return Err(Error::InvalidParameter("no curves to average".into()));
    }
    let len = curves[0].points.len();
    for c in curves {
        if c.points.len() != len {
            return Err(Error::LengthMismatch {
                left: c.points.len(),
                right: len,
            });
        }
    }
    Ok((0..len)
        .map(|i| curves.iter().map(|c| c.points[i].1).sum::<f64>() / curves.len() as f64)
        .collect())
}
