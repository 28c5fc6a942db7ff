//! Shared oracles and fixtures for the integration suites.

use dpm_rpf::dpm::{Cluster, DpmModel};
use dpm_rpf::kernels::{GaussianParams, NiwParams};
use nalgebra::dvector;
use statrs::function::gamma::ln_gamma;

pub fn paper_base() -> NiwParams {
    NiwParams::scalar(21.0, 1.0, 10.0, 5.0).unwrap()
}

/// Build a scalar mixture model with pinned cluster parameters.
///
/// `thetas` are `(mean, variance)` pairs; counts are derived from the
/// assignments, which use 1-based cluster ids and may leave clusters empty.
pub fn fixed_theta_model(
    outliers: &[f64],
    assignments: &[usize],
    thetas: &[(f64, f64)],
    alpha: f64,
) -> DpmModel {
    let clusters = thetas
        .iter()
        .enumerate()
        .map(|(idx, &(mean, var))| Cluster {
            id: idx + 1,
            count: assignments.iter().filter(|&&z| z == idx + 1).count(),
            params: GaussianParams::scalar(mean, var).unwrap(),
        })
        .collect();
    DpmModel::from_parts(
        alpha,
        paper_base(),
        clusters,
        outliers.iter().map(|&o| dvector![o]).collect(),
        assignments.to_vec(),
    )
    .unwrap()
}

fn scalar_gaussian_logpdf(x: f64, mean: f64, var: f64) -> f64 {
    -0.5 * ((2.0 * std::f64::consts::PI * var).ln() + (x - mean) * (x - mean) / var)
}

/// Exact finite-mixture assignment posterior with fixed cluster parameters:
/// integrating the symmetric Dirichlet(alpha/K) weights out of the joint
/// gives `p(Z) proportional to prod_i g(o_i | theta_{z_i}) *
/// prod_k Gamma(n_k(Z) + alpha/K) / Gamma(alpha/K)` over all K^I assignments.
///
/// Returns every assignment (1-based ids) with its normalized probability.
pub fn enumerate_assignments(
    outliers: &[f64],
    thetas: &[(f64, f64)],
    alpha: f64,
) -> Vec<(Vec<usize>, f64)> {
    let k = thetas.len();
    let i = outliers.len();
    let alpha_k = alpha / k as f64;
    let mut states = Vec::new();
    let mut log_weights = Vec::new();
    let total = (k as u64).pow(i as u32);
    for code in 0..total {
        let mut z = Vec::with_capacity(i);
        let mut rest = code;
        for _ in 0..i {
            z.push((rest % k as u64) as usize + 1);
            rest /= k as u64;
        }
        let mut logw = 0.0;
        let mut counts = vec![0usize; k];
        for (idx, &zi) in z.iter().enumerate() {
            let (mean, var) = thetas[zi - 1];
            logw += scalar_gaussian_logpdf(outliers[idx], mean, var);
            counts[zi - 1] += 1;
        }
        for &n in &counts {
            logw += ln_gamma(n as f64 + alpha_k) - ln_gamma(alpha_k);
        }
        states.push(z);
        log_weights.push(logw);
    }
    let max = log_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = log_weights.iter().map(|lw| (lw - max).exp()).collect();
    let norm: f64 = weights.iter().sum();
    states
        .into_iter()
        .zip(weights.into_iter().map(|w| w / norm))
        .collect()
}

/// Exact per-item marginals `p(z_i = k)` from the enumerated posterior.
pub fn exact_marginals(
    distribution: &[(Vec<usize>, f64)],
    n_items: usize,
    n_clusters: usize,
) -> Vec<Vec<f64>> {
    let mut marginals = vec![vec![0.0; n_clusters]; n_items];
    for (z, p) in distribution {
        for (i, &zi) in z.iter().enumerate() {
            marginals[i][zi - 1] += p;
        }
    }
    marginals
}
