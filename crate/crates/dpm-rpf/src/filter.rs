//! The robust filter engine and a plain bootstrap baseline.
//!
//! One filter step proposes particles through the state-transition prior,
//! evaluates the measurement residual under `K + 2` candidate noise models
//! (the standard noise, each active outlier cluster, and one fresh cluster
//! drawn from the NIW prior), samples a hypothesis from its count-weighted
//! posterior, and normalizes the importance weights under the sampled
//! hypothesis. The MMSE noise residual is then allocated to the winning
//! component, particles are residual-resampled, and the outlier model is
//! periodically refined by Gibbs sweeps.
//!
//! All likelihood work is done in the log domain. "Weight collapse" means
//! every particle's likelihood under the selected hypothesis underflows in
//! the linear domain; depending on [`CollapsePolicy`] that either aborts the
//! run or falls back to uniform weights with a logged warning.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::dpm::DpmModel;
use crate::error::{Error, Result};
use crate::kernels::{logsumexp, sample_categorical, GaussianDensity, GaussianParams, NiwParams};
use crate::resample::residual_resample;
use crate::rng::SeedStream;

/// Log-likelihoods below this underflow to zero in the linear domain
/// (exp(-700) < 1e-304), which is the collapse criterion.
pub const LOG_LIKELIHOOD_FLOOR: f64 = -700.0;

/// A state-space model: deterministic transition and measurement parts, the
/// process-noise and initial-state samplers, and the known standard
/// measurement-noise Gaussian.
///
/// `transition(x, t)` is the deterministic part of the map from the state at
/// time `t` to the state at time `t + 1`; `measurement(x, t)` is the
/// noiseless measurement of the state at time `t`. Both must be pure.
pub trait SystemModel {
    fn state_dim(&self) -> usize;
    fn meas_dim(&self) -> usize;
    fn transition(&self, x: &DVector<f64>, t: usize) -> DVector<f64>;
    fn measurement(&self, x: &DVector<f64>, t: usize) -> DVector<f64>;
    fn sample_process_noise(&self, rng: &mut SeedStream) -> DVector<f64>;
    fn sample_initial_state(&self, rng: &mut SeedStream) -> DVector<f64>;
    fn standard_noise(&self) -> &GaussianParams;
}

/// Weighted particle approximation of the state posterior.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleSet {
    states: Vec<DVector<f64>>,
    weights: Vec<f64>,
}

impl ParticleSet {
    pub fn new(states: Vec<DVector<f64>>, weights: Vec<f64>) -> Result<Self> {
        if states.is_empty() {
            return Err(Error::InvalidParameter(
                "particle set needs at least one particle".into(),
            ));
        }
        if states.len() != weights.len() {
            return Err(Error::LengthMismatch {
                left: states.len(),
                right: weights.len(),
            });
        }
        let sum: f64 = weights.iter().sum();
        if weights.iter().any(|&w| !(w >= 0.0) || !w.is_finite()) || (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidParameter(format!(
                "particle weights must be normalized, sum = {sum}"
            )));
        }
        Ok(Self { states, weights })
    }

    /// Equally weighted particles.
    pub fn uniform(states: Vec<DVector<f64>>) -> Result<Self> {
        let j = states.len();
        Self::new(states, vec![1.0 / j as f64; j])
    }

    /// Draw `count` particles from the model's initial-state prior.
    pub fn from_prior<M: SystemModel + ?Sized>(
        model: &M,
        count: usize,
        rng: &mut SeedStream,
    ) -> Result<Self> {
        let states = (0..count).map(|_| model.sample_initial_state(rng)).collect();
        Self::uniform(states)
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn states(&self) -> &[DVector<f64>] {
        &self.states
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Effective sample size, `1 / sum(w_j^2)`.
    pub fn ess(&self) -> f64 {
        1.0 / self.weights.iter().map(|w| w * w).sum::<f64>()
    }

    fn replace(&mut self, states: Vec<DVector<f64>>, weights: Vec<f64>) -> Result<()> {
        *self = Self::new(states, weights)?;
        Ok(())
    }
}

/// Propagate every particle through the transition prior: `f(x, t)` plus a
/// fresh process-noise draw. Weights are untouched.
pub fn propagate<M: SystemModel + ?Sized>(
    particles: &ParticleSet,
    model: &M,
    t: usize,
    rng: &mut SeedStream,
) -> Vec<DVector<f64>> {
    particles
        .states()
        .iter()
        .map(|x| model.transition(x, t) + model.sample_process_noise(rng))
        .collect()
}

/// Log-likelihood of the measurement under every hypothesis, for every
/// particle: row `l` holds `log p_l(y | xhat_j)` where the residual
/// `y - h(xhat_j)` is scored against the standard noise (`l = 0`), each
/// active cluster (`1..=K`), or `new_cluster` (`l = K + 1`).
///
/// `new_cluster` is the prior-drawn parameter set for the fresh-cluster
/// hypothesis, drawn once per time step and shared across particles.
pub fn hypothesis_loglik<M: SystemModel + ?Sized>(
    y: &DVector<f64>,
    proposed: &[DVector<f64>],
    model: &M,
    dpm: &DpmModel,
    new_cluster: &GaussianParams,
    t: usize,
) -> Result<Vec<Vec<f64>>> {
    if y.len() != model.meas_dim() {
        return Err(Error::DimensionMismatch {
            expected: model.meas_dim(),
            got: y.len(),
        });
    }
    let mut hypotheses = Vec::with_capacity(dpm.num_clusters() + 2);
    hypotheses.push(GaussianDensity::new(model.standard_noise())?);
    for cluster in dpm.clusters() {
        hypotheses.push(GaussianDensity::new(&cluster.params)?);
    }
    hypotheses.push(GaussianDensity::new(new_cluster)?);

    let residuals: Vec<DVector<f64>> = proposed
        .iter()
        .map(|x| y - model.measurement(x, t))
        .collect();
    hypotheses
        .iter()
        .map(|density| residuals.iter().map(|r| density.logpdf(r)).collect())
        .collect()
}

/// Per-hypothesis marginal likelihood `L(l) = sum_j w_j p_l(y | xhat_j)`,
/// computed by log-sum-exp and returned in the log domain.
pub fn marginal_log_likelihood(loglik: &[Vec<f64>], prev_weights: &[f64]) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(loglik.len());
    let mut terms = vec![0.0; prev_weights.len()];
    for row in loglik {
        if row.len() != prev_weights.len() {
            return Err(Error::LengthMismatch {
                left: row.len(),
                right: prev_weights.len(),
            });
        }
        for (term, (&w, &ll)) in terms.iter_mut().zip(prev_weights.iter().zip(row)) {
            *term = w.ln() + ll;
        }
        out.push(logsumexp(&terms));
    }
    Ok(out)
}

/// Count-proportional hypothesis prior `[n_0, n_1, ..., n_K, alpha]`,
/// normalized. `noise_mass` is the standard-noise count including its
/// pseudo-count.
pub fn hypothesis_prior(noise_mass: f64, cluster_counts: &[usize], alpha: f64) -> Vec<f64> {
    let mut weights = Vec::with_capacity(cluster_counts.len() + 2);
    weights.push(noise_mass);
    weights.extend(cluster_counts.iter().map(|&n| n as f64));
    weights.push(alpha);
    let total: f64 = weights.iter().sum();
    for w in &mut weights {
        *w /= total;
    }
    weights
}

/// Prior, marginal likelihood, and posterior over the noise hypotheses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisPosterior {
    /// Prior probabilities `p0(l)`.
    pub prior: Vec<f64>,
    /// Log-domain marginal likelihoods `ln L(l)`.
    pub log_marginal: Vec<f64>,
    /// Posterior probabilities `pi(l)`.
    pub posterior: Vec<f64>,
    /// The sampled hypothesis, once one has been drawn.
    pub sampled: Option<usize>,
}

/// Bayes combination `pi(l) = p0(l) L(l) / sum_k p0(k) L(k)`, evaluated in
/// the log domain.
pub fn hypothesis_posterior(prior: &[f64], log_marginal: &[f64]) -> Result<HypothesisPosterior> {
    if prior.len() != log_marginal.len() {
        return Err(Error::LengthMismatch {
            left: prior.len(),
            right: log_marginal.len(),
        });
    }
    let log_post: Vec<f64> = prior
        .iter()
        .zip(log_marginal)
        .map(|(&p, &ll)| p.ln() + ll)
        .collect();
    let norm = logsumexp(&log_post);
    if !norm.is_finite() {
        return Err(Error::TotalLikelihoodUnderflow);
    }
    Ok(HypothesisPosterior {
        prior: prior.to_vec(),
        log_marginal: log_marginal.to_vec(),
        posterior: log_post.iter().map(|lp| (lp - norm).exp()).collect(),
        sampled: None,
    })
}

/// Draw the hypothesis index `m` from the posterior.
pub fn select_hypothesis(posterior: &HypothesisPosterior, rng: &mut SeedStream) -> Result<usize> {
    sample_categorical(&posterior.posterior, rng)
}

/// Importance-weight update under one hypothesis:
/// `w_t^j = w_{t-1}^j p(y | xhat_j) / sum_a(...)`, via log-sum-exp.
///
/// Errors with [`Error::WeightCollapse`] when every entry is negative
/// infinity; scaling the likelihood row by any constant leaves the output
/// unchanged.
pub fn normalize_weights(prev_weights: &[f64], loglik_row: &[f64]) -> Result<Vec<f64>> {
    if prev_weights.len() != loglik_row.len() {
        return Err(Error::LengthMismatch {
            left: prev_weights.len(),
            right: loglik_row.len(),
        });
    }
    let log_raw: Vec<f64> = prev_weights
        .iter()
        .zip(loglik_row)
        .map(|(&w, &ll)| w.ln() + ll)
        .collect();
    let norm = logsumexp(&log_raw);
    if !norm.is_finite() {
        return Err(Error::WeightCollapse { t: None });
    }
    Ok(log_raw.iter().map(|lw| (lw - norm).exp()).collect())
}

/// Weighted particle mean.
pub fn mmse_state(particles: &ParticleSet) -> DVector<f64> {
    let mut mean = DVector::zeros(particles.states()[0].len());
    for (x, &w) in particles.states().iter().zip(particles.weights()) {
        mean.axpy(w, x, 1.0);
    }
    mean
}

/// MMSE noise residual `y - h(mean state)`, with `h` evaluated at the
/// weighted-mean state rather than averaging `h` over particles.
pub fn noise_residual<M: SystemModel + ?Sized>(
    y: &DVector<f64>,
    particles: &ParticleSet,
    model: &M,
    t: usize,
) -> DVector<f64> {
    y - model.measurement(&mmse_state(particles), t)
}

/// When the outlier model gets refined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RefineTrigger {
    /// Refine whenever the outlier store has just grown to a multiple of the
    /// interval.
    SizeMultiple,
    /// Additionally require that this step activated a new cluster.
    NewClusterAndSizeMultiple,
}

/// Gibbs-refinement schedule: every `interval` collected outliers run
/// `sweeps` sweeps, subject to the trigger policy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RefineConfig {
    pub interval: usize,
    pub sweeps: usize,
    pub trigger: RefineTrigger,
}

impl Default for RefineConfig {
    fn default() -> Self {
        Self {
            interval: 10,
            sweeps: 20,
            trigger: RefineTrigger::SizeMultiple,
        }
    }
}

/// What to do when every particle's likelihood underflows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CollapsePolicy {
    /// Abort the step with [`Error::WeightCollapse`] (library default; keeps
    /// bugs visible in tests).
    Error,
    /// Log a warning and continue with uniform weights so long sweeps finish.
    UniformFallback,
}

/// Everything needed to run the robust filter on a [`SystemModel`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterConfig {
    /// Particle count `J`.
    pub particles: usize,
    /// DPM concentration.
    pub alpha: f64,
    /// NIW base-distribution hyper-parameters.
    pub base: NiwParams,
    pub refine: RefineConfig,
    /// Initial mass of the standard-noise hypothesis before any allocation.
    pub noise_pseudo_count: f64,
    pub collapse: CollapsePolicy,
    /// Resample only when ESS drops below this fraction of `J`; `None`
    /// resamples every step.
    pub ess_resample_threshold: Option<f64>,
    /// Push particles through the transition before the first update.
    ///
    /// Off by default: the initial particles are drawn as a prior on the
    /// state at the first measurement time, so the first update scores them
    /// directly and propagation starts with the second measurement.
    #[serde(default)]
    pub propagate_first_step: bool,
}

impl FilterConfig {
    pub fn validate(&self) -> Result<()> {
        if self.particles == 0 {
            return Err(Error::InvalidParameter(
                "particle count must be >= 1".into(),
            ));
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::InvalidParameter("alpha must be positive".into()));
        }
        if self.refine.interval == 0 {
            return Err(Error::InvalidParameter(
                "refinement interval must be >= 1".into(),
            ));
        }
        if !(self.noise_pseudo_count >= 0.0) {
            return Err(Error::InvalidParameter(
                "noise pseudo-count must be nonnegative".into(),
            ));
        }
        self.base.validate()
    }
}

/// Per-step diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepDiagnostics {
    /// Time index of the consumed measurement.
    pub t: usize,
    /// Sampled hypothesis `m` (0 = standard noise).
    pub selected: usize,
    /// Active cluster count after the step.
    pub clusters: usize,
    /// Effective sample size after the weight update, before resampling.
    pub ess: f64,
    /// Hypothesis posterior `pi(l)`, `l = 0..=K+1`.
    pub posterior: Vec<f64>,
    /// Whether this step fell back to uniform weights.
    pub fallback: bool,
}

/// A filter step's state estimate plus its diagnostics.
#[derive(Debug, Clone)]
pub struct StepOutput {
    pub estimate: DVector<f64>,
    pub diagnostics: StepDiagnostics,
}

/// Mutable state of a running robust filter.
#[derive(Debug, Clone)]
pub struct FilterState {
    particles: ParticleSet,
    dpm: DpmModel,
    noise_count: u64,
    t: usize,
    config: FilterConfig,
}

impl FilterState {
    /// Initialize at `t = 0`: equally weighted particles from the initial
    /// prior and an empty outlier model.
    pub fn new<M: SystemModel + ?Sized>(
        model: &M,
        config: FilterConfig,
        rng: &mut SeedStream,
    ) -> Result<Self> {
        config.validate()?;
        let particles = ParticleSet::from_prior(model, config.particles, rng)?;
        let dpm = DpmModel::new(config.alpha, config.base.clone())?;
        Ok(Self {
            particles,
            dpm,
            noise_count: 0,
            t: 0,
            config,
        })
    }

    pub fn particles(&self) -> &ParticleSet {
        &self.particles
    }

    pub fn dpm(&self) -> &DpmModel {
        &self.dpm
    }

    /// Completed time steps.
    pub fn t(&self) -> usize {
        self.t
    }

    /// Standard-noise allocations so far, excluding the pseudo-count.
    pub fn noise_count(&self) -> u64 {
        self.noise_count
    }

    /// Count-proportional prior over hypotheses `0..=K+1`.
    pub fn hypothesis_prior(&self) -> Vec<f64> {
        hypothesis_prior(
            self.config.noise_pseudo_count + self.noise_count as f64,
            &self.dpm.counts(),
            self.dpm.alpha(),
        )
    }

    /// Advance the filter by one measurement.
    pub fn step<M: SystemModel + ?Sized>(
        &mut self,
        y: &DVector<f64>,
        model: &M,
        rng: &mut SeedStream,
    ) -> Result<StepOutput> {
        let t = self.t + 1;
        let proposed = if self.t == 0 && !self.config.propagate_first_step {
            self.particles.states().to_vec()
        } else {
            propagate(&self.particles, model, self.t, rng)
        };
        let candidate = self.dpm.spawn_cluster(rng)?;
        let loglik = hypothesis_loglik(y, &proposed, model, &self.dpm, &candidate.params, t)?;
        let log_marginal = marginal_log_likelihood(&loglik, self.particles.weights())?;
        let prior = self.hypothesis_prior();
        let mut posterior = match hypothesis_posterior(&prior, &log_marginal) {
            Ok(p) => p,
            Err(Error::TotalLikelihoodUnderflow) => {
                return Err(Error::WeightCollapse { t: Some(t) })
            }
            Err(e) => return Err(e),
        };
        let selected = select_hypothesis(&posterior, rng)?;
        posterior.sampled = Some(selected);
        let k_before = self.dpm.num_clusters();
        let j = self.particles.len();

        let row = &loglik[selected];
        let collapsed = row.iter().all(|&ll| ll < LOG_LIKELIHOOD_FLOOR);
        let weights = if collapsed {
            match self.config.collapse {
                CollapsePolicy::Error => return Err(Error::WeightCollapse { t: Some(t) }),
                CollapsePolicy::UniformFallback => {
                    log::debug!("all likelihoods underflowed at t = {t}; using uniform weights");
                    vec![1.0 / j as f64; j]
                }
            }
        } else {
            match normalize_weights(self.particles.weights(), row) {
                Ok(w) => w,
                Err(Error::WeightCollapse { .. }) => {
                    return Err(Error::WeightCollapse { t: Some(t) })
                }
                Err(e) => return Err(e),
            }
        };
        self.particles.replace(proposed, weights)?;

        let estimate = mmse_state(&self.particles);
        let residual = noise_residual(y, &self.particles, model, t);
        if selected == 0 {
            self.noise_count += 1;
        } else if selected <= k_before {
            self.dpm.allocate_existing(residual, selected)?;
        } else {
            let id = self.dpm.commit_cluster(candidate)?;
            self.dpm.allocate_existing(residual, id)?;
        }

        let ess = self.particles.ess();
        let resample_now = match self.config.ess_resample_threshold {
            None => true,
            Some(fraction) => ess < fraction * j as f64,
        };
        if resample_now {
            self.particles = residual_resample(&self.particles, rng)?;
        }

        if selected > 0 && self.refine_due(selected, k_before) {
            self.dpm.gibbs_refine(self.config.refine.sweeps, rng)?;
        }

        self.t = t;
        Ok(StepOutput {
            estimate,
            diagnostics: StepDiagnostics {
                t,
                selected,
                clusters: self.dpm.num_clusters(),
                ess,
                posterior: posterior.posterior,
                fallback: collapsed,
            },
        })
    }

    fn refine_due(&self, selected: usize, k_before: usize) -> bool {
        let on_multiple = self.dpm.outlier_count() % self.config.refine.interval == 0;
        match self.config.refine.trigger {
            RefineTrigger::SizeMultiple => on_multiple,
            RefineTrigger::NewClusterAndSizeMultiple => on_multiple && selected == k_before + 1,
        }
    }
}

/// One whole filtering pass: per-step estimates and diagnostics.
#[derive(Debug, Clone)]
pub struct FilterRun {
    pub estimates: Vec<DVector<f64>>,
    pub diagnostics: Vec<StepDiagnostics>,
    /// Steps that fell back to uniform weights.
    pub fallback_steps: u64,
    /// Active clusters when the run finished.
    pub final_clusters: usize,
}

/// Run the robust filter over a full measurement sequence.
pub fn run_dpm_rpf<M: SystemModel + ?Sized>(
    model: &M,
    measurements: &[DVector<f64>],
    config: &FilterConfig,
    rng: &mut SeedStream,
) -> Result<FilterRun> {
    let mut state = FilterState::new(model, config.clone(), rng)?;
    let mut estimates = Vec::with_capacity(measurements.len());
    let mut diagnostics = Vec::with_capacity(measurements.len());
    let mut fallback_steps = 0;
    for y in measurements {
        let out = state.step(y, model, rng)?;
        fallback_steps += u64::from(out.diagnostics.fallback);
        estimates.push(out.estimate);
        diagnostics.push(out.diagnostics);
    }
    if fallback_steps > 0 {
        log::warn!(
            "robust filter fell back to uniform weights on {fallback_steps} of {} steps",
            measurements.len()
        );
    }
    Ok(FilterRun {
        estimates,
        diagnostics,
        fallback_steps,
        final_clusters: state.dpm.num_clusters(),
    })
}

/// Mutable state of the plain bootstrap baseline: standard-noise likelihood
/// only, uniform-weight fallback on underflow, residual resampling every
/// step.
#[derive(Debug, Clone)]
pub struct BaselineState {
    particles: ParticleSet,
    density: GaussianDensity,
    t: usize,
}

impl BaselineState {
    pub fn new<M: SystemModel + ?Sized>(
        model: &M,
        particles: usize,
        rng: &mut SeedStream,
    ) -> Result<Self> {
        Ok(Self {
            particles: ParticleSet::from_prior(model, particles, rng)?,
            density: GaussianDensity::new(model.standard_noise())?,
            t: 0,
        })
    }

    pub fn particles(&self) -> &ParticleSet {
        &self.particles
    }

    pub fn t(&self) -> usize {
        self.t
    }

    /// Advance by one measurement. Like the robust filter, the first update
    /// scores the initial-prior particles directly; when every likelihood
    /// underflows the step keeps uniform weights and logs a warning so sweeps
    /// over heavily contaminated data still complete.
    pub fn step<M: SystemModel + ?Sized>(
        &mut self,
        y: &DVector<f64>,
        model: &M,
        rng: &mut SeedStream,
    ) -> Result<StepOutput> {
        let t = self.t + 1;
        let j = self.particles.len();
        let proposed = if self.t == 0 {
            self.particles.states().to_vec()
        } else {
            propagate(&self.particles, model, self.t, rng)
        };
        let row: Vec<f64> = proposed
            .iter()
            .map(|x| self.density.logpdf(&(y - model.measurement(x, t))))
            .collect::<Result<_>>()?;
        let collapsed = row.iter().all(|&ll| ll < LOG_LIKELIHOOD_FLOOR);
        let weights = if collapsed {
            log::debug!("baseline weights underflowed at t = {t}; using uniform weights");
            vec![1.0 / j as f64; j]
        } else {
            normalize_weights(self.particles.weights(), &row)
                .map_err(|_| Error::WeightCollapse { t: Some(t) })?
        };
        self.particles.replace(proposed, weights)?;
        let estimate = mmse_state(&self.particles);
        let ess = self.particles.ess();
        self.particles = residual_resample(&self.particles, rng)?;
        self.t = t;
        Ok(StepOutput {
            estimate,
            diagnostics: StepDiagnostics {
                t,
                selected: 0,
                clusters: 0,
                ess,
                posterior: vec![1.0],
                fallback: collapsed,
            },
        })
    }
}

/// Standard (non-robust) bootstrap particle filter over a whole measurement
/// sequence; the comparison baseline for the robust filter.
pub fn run_baseline_pf<M: SystemModel + ?Sized>(
    model: &M,
    measurements: &[DVector<f64>],
    particles: usize,
    rng: &mut SeedStream,
) -> Result<FilterRun> {
    let mut state = BaselineState::new(model, particles, rng)?;
    let mut estimates = Vec::with_capacity(measurements.len());
    let mut diagnostics = Vec::with_capacity(measurements.len());
    let mut fallback_steps = 0;
    for y in measurements {
        let out = state.step(y, model, rng)?;
        fallback_steps += u64::from(out.diagnostics.fallback);
        estimates.push(out.estimate);
        diagnostics.push(out.diagnostics);
    }
    if fallback_steps > 0 {
        log::warn!(
            "baseline PF fell back to uniform weights on {fallback_steps} of {} steps",
            measurements.len()
        );
    }
    Ok(FilterRun {
        estimates,
        diagnostics,
        fallback_steps,
        final_clusters: 0,
    })
}
