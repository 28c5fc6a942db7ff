//! Dirichlet process mixture model of the measurement-outlier distribution.
//!
//! The model keeps the set of collected outliers `O`, their cluster
//! assignments `Z`, and one [`Cluster`] per active mixture component holding
//! that component's occupancy count and its currently sampled Gaussian
//! parameters. Component parameters carry a conjugate normal-inverse-Wishart
//! prior, so posterior updates are closed-form and Gibbs refinement only ever
//! alternates between mixture weights, assignments, and per-cluster parameter
//! redraws.
//!
//! Between refinements cluster parameters stay frozen at their last sampled
//! values; new clusters enter with a fresh prior draw. Refinement never
//! changes the number of clusters upward - growth only happens through the
//! filter's new-cluster hypothesis - and clusters left empty by the final
//! sweep are dropped with ids compacted.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{
    logsumexp, sample_categorical, sample_dirichlet, sample_niw, GaussianDensity, GaussianParams,
    NiwParams,
};
use crate::rng::SeedStream;

/// How many times a degenerate covariance draw is retried before erroring.
const MAX_SAMPLE_RETRIES: usize = 16;

/// One active mixture component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cluster {
    /// 1-based id; always equals the cluster's position in the model.
    pub id: usize,
    /// Number of outliers currently assigned to this cluster.
    pub count: usize,
    /// The currently active sampled parameter value.
    pub params: GaussianParams,
}

/// A weighted Gaussian mixture, used both for the learned outlier model's
/// predictive density and for specifying true contamination distributions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureDensity {
    pub weights: Vec<f64>,
    pub components: Vec<GaussianParams>,
}

impl MixtureDensity {
    pub fn new(weights: Vec<f64>, components: Vec<GaussianParams>) -> Result<Self> {
        let mix = Self {
            weights,
            components,
        };
        mix.validate()?;
        Ok(mix)
    }

    pub fn dim(&self) -> usize {
        self.components.first().map_or(0, GaussianParams::dim)
    }

    pub fn validate(&self) -> Result<()> {
        if self.components.is_empty() {
            return Err(Error::InvalidParameter("mixture has no components".into()));
        }
        if self.weights.len() != self.components.len() {
            return Err(Error::LengthMismatch {
                left: self.weights.len(),
                right: self.components.len(),
            });
        }
        let sum: f64 = self.weights.iter().sum();
        if self.weights.iter().any(|&w| !(w >= 0.0) || !w.is_finite()) || (sum - 1.0).abs() > 1e-12
        {
            return Err(Error::InvalidParameter(format!(
                "mixture weights must be a probability vector, sum = {sum}"
            )));
        }
        let d = self.components[0].dim();
        for c in &self.components {
            if c.dim() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: c.dim(),
                });
            }
            c.validate()?;
        }
        Ok(())
    }

    /// Precompute component factorizations for repeated evaluation/sampling.
    pub fn evaluator(&self) -> Result<MixtureEvaluator> {
        self.validate()?;
        let densities = self
            .components
            .iter()
            .map(GaussianDensity::new)
            .collect::<Result<Vec<_>>>()?;
        Ok(MixtureEvaluator {
            ln_weights: self.weights.iter().map(|w| w.ln()).collect(),
            weights: self.weights.clone(),
            densities,
        })
    }
}

/// A [`MixtureDensity`] with per-component Cholesky factors precomputed.
#[derive(Debug, Clone)]
pub struct MixtureEvaluator {
    ln_weights: Vec<f64>,
    weights: Vec<f64>,
    densities: Vec<GaussianDensity>,
}

impl MixtureEvaluator {
    pub fn logpdf(&self, x: &DVector<f64>) -> Result<f64> {
        let mut terms = Vec::with_capacity(self.densities.len());
        for (lw, dens) in self.ln_weights.iter().zip(&self.densities) {
            terms.push(lw + dens.logpdf(x)?);
        }
        Ok(logsumexp(&terms))
    }

    pub fn sample(&self, rng: &mut SeedStream) -> Result<DVector<f64>> {
        let component = sample_categorical(&self.weights, rng)?;
        Ok(self.densities[component].sample(rng))
    }
}

/// Closed-form normal-inverse-Wishart posterior update.
///
/// With `n` observations of sample mean `obar` and centered scatter `R`, the
/// posterior hyper-parameters are
///
/// ```text
/// mu'    = (rho mu0 + n obar) / (rho + n)
/// rho'   = rho + n
/// kappa' = kappa + n
/// W'     = W + R + rho n / (rho + n) (obar - mu0)(obar - mu0)^T
/// ```
///
/// An empty observation list returns the prior unchanged.
pub fn niw_posterior(base: &NiwParams, observations: &[DVector<f64>]) -> Result<NiwParams> {
    base.validate()?;
    if observations.is_empty() {
        return Ok(base.clone());
    }
    let d = base.dim();
    for o in observations {
        if o.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: o.len(),
            });
        }
    }
    let n = observations.len() as f64;
    let mut obar = DVector::zeros(d);
    for o in observations {
        obar += o;
    }
    obar /= n;
    let mut scatter = DMatrix::zeros(d, d);
    for o in observations {
        let centered = o - &obar;
        scatter += &centered * centered.transpose();
    }
    let rho_n = base.rho + n;
    let mu = (&base.mu0 * base.rho + &obar * n) / rho_n;
    let diff = &obar - &base.mu0;
    let w = &base.w + scatter + (&diff * diff.transpose()) * (base.rho * n / rho_n);
    NiwParams::new(mu, rho_n, base.kappa + n, w)
}

/// The full outlier model: concentration, base NIW prior, active clusters,
/// collected outliers, and their assignments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DpmModel {
    alpha: f64,
    base: NiwParams,
    clusters: Vec<Cluster>,
    outliers: Vec<DVector<f64>>,
    assignments: Vec<usize>,
}

impl DpmModel {
    pub fn new(alpha: f64, base: NiwParams) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "dpm concentration alpha must be positive, got {alpha}"
            )));
        }
        base.validate()?;
        Ok(Self {
            alpha,
            base,
            clusters: Vec::new(),
            outliers: Vec::new(),
            assignments: Vec::new(),
        })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn base(&self) -> &NiwParams {
        &self.base
    }

    pub fn clusters(&self) -> &[Cluster] {
        &self.clusters
    }

    pub fn outliers(&self) -> &[DVector<f64>] {
        &self.outliers
    }

    pub fn assignments(&self) -> &[usize] {
        &self.assignments
    }

    /// Number of active clusters, `K`.
    pub fn num_clusters(&self) -> usize {
        self.clusters.len()
    }

    /// Number of collected outliers, `|O|`.
    pub fn outlier_count(&self) -> usize {
        self.outliers.len()
    }

    pub fn counts(&self) -> Vec<usize> {
        self.clusters.iter().map(|c| c.count).collect()
    }

    /// Unnormalized seating weights `[n_1, ..., n_K, alpha]`; the final entry
    /// is the new-cluster mass. The sum is exactly `sum(n_k) + alpha`.
    pub fn crp_cluster_weights(&self) -> Vec<f64> {
        let mut w: Vec<f64> = self.clusters.iter().map(|c| c.count as f64).collect();
        w.push(self.alpha);
        w
    }

    /// Draw a candidate cluster with id `K + 1`, zero count, and parameters
    /// sampled from the NIW base prior. The model is unchanged until the
    /// caller commits the cluster.
    pub fn spawn_cluster(&self, rng: &mut SeedStream) -> Result<Cluster> {
        let params = sample_params_with_retry(&self.base, rng)?;
        Ok(Cluster {
            id: self.clusters.len() + 1,
            count: 0,
            params,
        })
    }

    /// Activate a spawned cluster; its id must be `K + 1`.
    pub fn commit_cluster(&mut self, cluster: Cluster) -> Result<usize> {
        let expected = self.clusters.len() + 1;
        if cluster.id != expected || cluster.count != 0 {
            return Err(Error::InvalidClusterId {
                id: cluster.id,
                k: self.clusters.len(),
            });
        }
        cluster.params.validate()?;
        self.clusters.push(cluster);
        Ok(expected)
    }

    /// Append an outlier to an existing cluster `k` in `1..=K`.
    pub fn allocate_existing(&mut self, outlier: DVector<f64>, k: usize) -> Result<()> {
        if k == 0 || k > self.clusters.len() {
            return Err(Error::InvalidClusterId {
                id: k,
                k: self.clusters.len(),
            });
        }
        if outlier.len() != self.base.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.base.dim(),
                got: outlier.len(),
            });
        }
        self.outliers.push(outlier);
        self.assignments.push(k);
        self.clusters[k - 1].count += 1;
        Ok(())
    }

    /// Allocate an outlier to cluster `k` in `1..=K+1`; `k == K + 1` spawns
    /// and commits a fresh prior-drawn cluster first.
    pub fn allocate(&mut self, outlier: DVector<f64>, k: usize, rng: &mut SeedStream) -> Result<()> {
        if k == self.clusters.len() + 1 {
            let cluster = self.spawn_cluster(rng)?;
            self.commit_cluster(cluster)?;
        }
        self.allocate_existing(outlier, k)
    }

    /// Run `sweeps` Gibbs sweeps over (mixture weights, assignments, cluster
    /// parameters), keeping `K` fixed during the sweeps. Each sweep:
    ///
    /// 1. draw mixture weights `pi ~ Dirichlet(n_1 + alpha/K, ..., n_K + alpha/K)`
    ///    from the incoming occupancy counts;
    /// 2. redraw every assignment `z_i` with probability proportional to
    ///    `pi_k g(o_i | theta_k)`;
    /// 3. redraw every cluster's parameters from its NIW conditional posterior
    ///    (the prior, when the cluster is currently empty).
    ///
    /// The state after the final sweep is the output configuration; clusters
    /// left empty at that point are dropped and ids compacted.
    pub fn gibbs_refine(&mut self, sweeps: usize, rng: &mut SeedStream) -> Result<()> {
        if self.outliers.is_empty() || self.clusters.is_empty() {
            return Err(Error::EmptyModel);
        }
        if sweeps == 0 {
            return Ok(());
        }
        let k = self.clusters.len();
        let alpha_k = self.alpha / k as f64;
        for _ in 0..sweeps {
            let concentrations: Vec<f64> = self
                .clusters
                .iter()
                .map(|c| c.count as f64 + alpha_k)
                .collect();
            let pi = sample_dirichlet(&concentrations, rng)?;
            let ln_pi: Vec<f64> = pi.iter().map(|p| p.ln()).collect();

            let densities = self
                .clusters
                .iter()
                .map(|c| GaussianDensity::new(&c.params))
                .collect::<Result<Vec<_>>>()?;
            let mut logw = vec![0.0; k];
            for i in 0..self.outliers.len() {
                let mut max = f64::NEG_INFINITY;
                for c in 0..k {
                    logw[c] = ln_pi[c] + densities[c].logpdf(&self.outliers[i])?;
                    max = max.max(logw[c]);
                }
                let w: Vec<f64> = logw.iter().map(|lw| (lw - max).exp()).collect();
                let z = sample_categorical(&w, rng)? + 1;
                let old = self.assignments[i];
                if z != old {
                    self.clusters[old - 1].count -= 1;
                    self.clusters[z - 1].count += 1;
                    self.assignments[i] = z;
                }
            }

            for c in 0..k {
                let members: Vec<DVector<f64>> = self
                    .outliers
                    .iter()
                    .zip(&self.assignments)
                    .filter(|(_, &z)| z == c + 1)
                    .map(|(o, _)| o.clone())
                    .collect();
                let posterior = niw_posterior(&self.base, &members)?;
                self.clusters[c].params = sample_params_with_retry(&posterior, rng)?;
            }
        }
        self.drop_empty_clusters();
        Ok(())
    }

    /// The count-weighted mixture over active clusters.
    pub fn predictive_mixture(&self) -> Result<MixtureDensity> {
        if self.clusters.is_empty() {
            return Err(Error::NoOutlierModel);
        }
        let total: usize = self.clusters.iter().map(|c| c.count).sum();
        if total == 0 {
            return Err(Error::NoOutlierModel);
        }
        MixtureDensity::new(
            self.clusters
                .iter()
                .map(|c| c.count as f64 / total as f64)
                .collect(),
            self.clusters.iter().map(|c| c.params.clone()).collect(),
        )
    }

    /// Assemble a model from explicit state, re-validating every invariant.
    pub fn from_parts(
        alpha: f64,
        base: NiwParams,
        clusters: Vec<Cluster>,
        outliers: Vec<DVector<f64>>,
        assignments: Vec<usize>,
    ) -> Result<Self> {
        let model = Self {
            alpha,
            base,
            clusters,
            outliers,
            assignments,
        };
        model.validate()?;
        Ok(model)
    }

    /// Serialize the full model state as JSON for experiment checkpointing.
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self)
            .map_err(|e| Error::Config(format!("dpm snapshot serialization: {e}")))
    }

    /// Restore a checkpointed model, re-validating every invariant.
    pub fn from_json(text: &str) -> Result<Self> {
        let model: Self = serde_json::from_str(text)
            .map_err(|e| Error::Config(format!("dpm snapshot parse: {e}")))?;
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::InvalidParameter("alpha must be positive".into()));
        }
        self.base.validate()?;
        if self.outliers.len() != self.assignments.len() {
            return Err(Error::LengthMismatch {
                left: self.outliers.len(),
                right: self.assignments.len(),
            });
        }
        let k = self.clusters.len();
        let mut counts = vec![0usize; k];
        for &z in &self.assignments {
            if z == 0 || z > k {
                return Err(Error::InvalidClusterId { id: z, k });
            }
            counts[z - 1] += 1;
        }
        for (i, cluster) in self.clusters.iter().enumerate() {
            if cluster.id != i + 1 {
                return Err(Error::InvalidClusterId {
                    id: cluster.id,
                    k,
                });
            }
            if cluster.count != counts[i] {
                return Err(Error::InvalidParameter(format!(
                    "cluster {} count {} disagrees with assignments ({})",
                    cluster.id, cluster.count, counts[i]
                )));
            }
            if cluster.params.dim() != self.base.dim() {
                return Err(Error::DimensionMismatch {
                    expected: self.base.dim(),
                    got: cluster.params.dim(),
                });
            }
            cluster.params.validate()?;
        }
        for o in &self.outliers {
            if o.len() != self.base.dim() {
                return Err(Error::DimensionMismatch {
                    expected: self.base.dim(),
                    got: o.len(),
                });
            }
        }
        Ok(())
    }

    fn drop_empty_clusters(&mut self) {
        if self.clusters.iter().all(|c| c.count > 0) {
            return;
        }
        let mut remap = vec![0usize; self.clusters.len() + 1];
        let mut kept = Vec::with_capacity(self.clusters.len());
        for cluster in self.clusters.drain(..) {
            if cluster.count > 0 {
                remap[cluster.id] = kept.len() + 1;
                kept.push(cluster);
            }
        }
        for (idx, cluster) in kept.iter_mut().enumerate() {
            cluster.id = idx + 1;
        }
        self.clusters = kept;
        for z in &mut self.assignments {
            *z = remap[*z];
        }
    }
}

/// Sample (mean, covariance) from a NIW, retrying degenerate covariance draws
/// a bounded number of times.
fn sample_params_with_retry(params: &NiwParams, rng: &mut SeedStream) -> Result<GaussianParams> {
    let mut attempts = 0;
    loop {
        attempts += 1;
        match sample_niw(params, rng).and_then(|(mu, sigma)| GaussianParams::new(mu, sigma)) {
            Ok(p) => return Ok(p),
            Err(Error::DegenerateCovariance { .. } | Error::InvalidCovariance)
                if attempts < MAX_SAMPLE_RETRIES => {}
            Err(Error::DegenerateCovariance { .. } | Error::InvalidCovariance) => {
                return Err(Error::DegenerateCovariance { attempts })
            }
            Err(e) => return Err(e),
        }
    }
}
