//! Experiment configuration: a flat, diff-friendly TOML file with one named
//! key per hyper-parameter, plus helpers that turn the file into the
//! scenario/filter/experiment configs the library consumes.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::benchmark::TimeSeriesConfig;
use crate::dpm::MixtureDensity;
use crate::error::{Error, Result};
use crate::filter::{CollapsePolicy, FilterConfig, RefineConfig, RefineTrigger};
use crate::kernels::{GammaParams, GaussianParams, NiwParams};
use crate::metrics::KlExperimentConfig;

/// Which filter to run.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum, PartialOrd, Ord,
)]
#[serde(rename_all = "kebab-case")]
#[clap(rename_all = "kebab-case")]
pub enum Algorithm {
    /// The robust filter with the learned outlier model.
    DpmRpf,
    /// Plain bootstrap particle filter (standard-noise likelihood only).
    BaselinePf,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::DpmRpf => "dpm-rpf",
            Algorithm::BaselinePf => "baseline-pf",
        }
    }
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Simulated-scenario section.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimSection {
    /// Outlier probability used by `simulate` and `filter`.
    pub outlier_prob: f64,
    pub x1: f64,
    pub init_prior_var: f64,
    pub outlier_weights: Vec<f64>,
    pub outlier_means: Vec<f64>,
    pub outlier_vars: Vec<f64>,
}

impl Default for SimSection {
    fn default() -> Self {
        Self {
            outlier_prob: 0.1,
            x1: 1.0,
            init_prior_var: 1.0,
            outlier_weights: vec![0.5, 0.5],
            outlier_means: vec![20.0, 22.0],
            outlier_vars: vec![0.1, 0.1],
        }
    }
}

/// Known standard measurement noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseSection {
    pub mean: f64,
    pub var: f64,
}

impl Default for NoiseSection {
    fn default() -> Self {
        Self { mean: 0.0, var: 0.01 }
    }
}

/// Process-noise Gamma in the shape/scale convention (mean = shape * scale).
///
/// The default is the benchmark's Gamma(3, 2) read as shape/rate, i.e.
/// shape 3 and scale 0.5; set `scale = 2.0` for the shape/scale reading.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProcessSection {
    pub shape: f64,
    pub scale: f64,
}

impl Default for ProcessSection {
    fn default() -> Self {
        Self { shape: 3.0, scale: 0.5 }
    }
}

/// Outlier-model hyper-parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DpmSection {
    pub alpha: f64,
    pub mu0: f64,
    pub kappa: f64,
    pub w: f64,
    pub rho: f64,
    /// Initial mass of the standard-noise hypothesis.
    pub pseudo_count: f64,
}

impl Default for DpmSection {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            mu0: 21.0,
            kappa: 10.0,
            w: 5.0,
            rho: 1.0,
            pseudo_count: 1.0,
        }
    }
}

/// Gibbs-refinement schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RefineSection {
    pub interval: usize,
    pub sweeps: usize,
    pub trigger: RefineTrigger,
}

impl Default for RefineSection {
    fn default() -> Self {
        Self {
            interval: 10,
            sweeps: 20,
            trigger: RefineTrigger::SizeMultiple,
        }
    }
}

/// Outlier-model KL experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KlSection {
    pub n_outliers: usize,
    pub runs: usize,
    pub samples: usize,
}

impl Default for KlSection {
    fn default() -> Self {
        Self {
            n_outliers: 480,
            runs: 30,
            samples: 10_000,
        }
    }
}

/// MSE sweep grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub outlier_probs: Vec<f64>,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            outlier_probs: vec![0.1, 0.3, 0.5, 0.7, 0.9],
        }
    }
}

/// The whole experiment configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Root seed every stream is derived from.
    pub seed: u64,
    /// Particle count `J`.
    pub particles: usize,
    /// Measurements per run.
    pub horizon: usize,
    /// Independent runs per sweep cell.
    pub runs: usize,
    /// Algorithm used by the `filter` command.
    pub algorithm: Algorithm,
    /// Algorithms covered by the `mse-sweep` command.
    pub algorithms: Vec<Algorithm>,
    /// Default output directory.
    pub output_dir: String,
    pub sim: SimSection,
    pub noise: NoiseSection,
    pub process: ProcessSection,
    pub dpm: DpmSection,
    pub refine: RefineSection,
    pub kl: KlSection,
    pub sweep: SweepSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            particles: 200,
            horizon: 600,
            runs: 100,
            algorithm: Algorithm::DpmRpf,
            algorithms: vec![Algorithm::DpmRpf, Algorithm::BaselinePf],
            output_dir: "out".into(),
            sim: SimSection::default(),
            noise: NoiseSection::default(),
            process: ProcessSection::default(),
            dpm: DpmSection::default(),
            refine: RefineSection::default(),
            kl: KlSection::default(),
            sweep: SweepSection::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: Self =
            toml::from_str(text).map_err(|e| Error::Config(format!("config parse: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(format!("config serialize: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.particles == 0 {
            return Err(Error::Config("particles must be >= 1".into()));
        }
        if self.horizon == 0 {
            return Err(Error::Config("horizon must be >= 1".into()));
        }
        if self.runs == 0 {
            return Err(Error::Config("runs must be >= 1".into()));
        }
        if self.algorithms.is_empty() {
            return Err(Error::Config("algorithms must not be empty".into()));
        }
        for po in self
            .sweep
            .outlier_probs
            .iter()
            .chain(std::iter::once(&self.sim.outlier_prob))
        {
            if !(0.0..=1.0).contains(po) {
                return Err(Error::Config(format!(
                    "outlier probability {po} outside [0, 1]"
                )));
            }
        }
        if self.kl.runs == 0 || self.kl.n_outliers == 0 || self.kl.samples == 0 {
            return Err(Error::Config("kl section entries must be >= 1".into()));
        }
        self.time_series(self.sim.outlier_prob)?.validate()?;
        self.filter_config()?.validate()
    }

    /// The true contaminating mixture.
    pub fn outlier_mixture(&self) -> Result<MixtureDensity> {
        let n = self.sim.outlier_means.len();
        if self.sim.outlier_weights.len() != n || self.sim.outlier_vars.len() != n {
            return Err(Error::Config(
                "outlier mixture weight/mean/var arrays must share a length".into(),
            ));
        }
        let components = self
            .sim
            .outlier_means
            .iter()
            .zip(&self.sim.outlier_vars)
            .map(|(&m, &v)| GaussianParams::scalar(m, v))
            .collect::<Result<Vec<_>>>()?;
        MixtureDensity::new(self.sim.outlier_weights.clone(), components)
    }

    /// Scenario config at a given contamination level.
    pub fn time_series(&self, outlier_prob: f64) -> Result<TimeSeriesConfig> {
        Ok(TimeSeriesConfig {
            horizon: self.horizon,
            outlier_prob,
            outlier_mixture: self.outlier_mixture()?,
            standard_noise: GaussianParams::scalar(self.noise.mean, self.noise.var)?,
            process_noise: GammaParams::new(self.process.shape, self.process.scale)?,
            x1: self.sim.x1,
            init_prior_var: self.sim.init_prior_var,
        })
    }

    /// Robust-filter config; the harness falls back to uniform weights on
    /// collapse so long sweeps always complete.
    pub fn filter_config(&self) -> Result<FilterConfig> {
        Ok(FilterConfig {
            particles: self.particles,
            alpha: self.dpm.alpha,
            base: NiwParams::scalar(self.dpm.mu0, self.dpm.rho, self.dpm.kappa, self.dpm.w)?,
            refine: self.refine_config(),
            noise_pseudo_count: self.dpm.pseudo_count,
            collapse: CollapsePolicy::UniformFallback,
            ess_resample_threshold: None,
            propagate_first_step: false,
        })
    }

    pub fn refine_config(&self) -> RefineConfig {
        RefineConfig {
            interval: self.refine.interval,
            sweeps: self.refine.sweeps,
            trigger: self.refine.trigger,
        }
    }

    /// Outlier-model KL experiment config.
    pub fn kl_config(&self) -> Result<KlExperimentConfig> {
        Ok(KlExperimentConfig {
            n_outliers: self.kl.n_outliers,
            runs: self.kl.runs,
            kl_samples: self.kl.samples,
            alpha: self.dpm.alpha,
            base: NiwParams::scalar(self.dpm.mu0, self.dpm.rho, self.dpm.kappa, self.dpm.w)?,
            refine: self.refine_config(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_carry_the_reference_hyper_parameters() {
        let c = ExperimentConfig::default();
        assert_eq!(c.particles, 200);
        assert_eq!(c.horizon, 600);
        assert_eq!(c.runs, 100);
        assert_eq!(c.dpm.alpha, 1.0);
        assert_eq!(c.dpm.mu0, 21.0);
        assert_eq!(c.dpm.kappa, 10.0);
        assert_eq!(c.dpm.w, 5.0);
        assert_eq!(c.dpm.rho, 1.0);
        assert_eq!(c.refine.interval, 10);
        assert_eq!(c.refine.sweeps, 20);
        assert_eq!(c.kl.n_outliers, 480);
        assert_eq!(c.kl.runs, 30);
        assert_eq!(c.sweep.outlier_probs, vec![0.1, 0.3, 0.5, 0.7, 0.9]);
        c.validate().unwrap();
    }

    #[test]
    fn toml_round_trip_is_idempotent() {
        let config = ExperimentConfig::default();
        let first = config.to_toml_string().unwrap();
        let reparsed = ExperimentConfig::from_toml_str(&first).unwrap();
        assert_eq!(reparsed, config);
        let second = reparsed.to_toml_string().unwrap();
        assert_eq!(first, second);
    }

    #[test]
    fn partial_files_fill_with_defaults() {
        let config =
            ExperimentConfig::from_toml_str("seed = 9\n[dpm]\nalpha = 0.5\n").unwrap();
        assert_eq!(config.seed, 9);
        assert_eq!(config.dpm.alpha, 0.5);
        assert_eq!(config.dpm.mu0, 21.0);
        assert_eq!(config.particles, 200);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(ExperimentConfig::from_toml_str("sede = 9\n").is_err());
    }

    #[test]
    fn bad_ranges_are_rejected() {
        assert!(ExperimentConfig::from_toml_str("runs = 0\n").is_err());
        assert!(ExperimentConfig::from_toml_str("[sim]\noutlier_prob = 1.5\n").is_err());
    }

    #[test]
    fn algorithm_names_round_trip() {
        assert_eq!(Algorithm::DpmRpf.name(), "dpm-rpf");
        assert_eq!(Algorithm::BaselinePf.name(), "baseline-pf");
        let config = ExperimentConfig::from_toml_str("algorithms = [\"baseline-pf\"]\n").unwrap();
        assert_eq!(config.algorithms, vec![Algorithm::BaselinePf]);
    }
}
