//! Multivariate Gaussian parameters, sampling, and log-density.

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::LN_2PI;
use crate::error::{Error, Result};
use crate::rng::SeedStream;

/// Mean vector and covariance matrix of a Gaussian.
///
/// The covariance must be symmetric positive definite; every operation that
/// consumes it factorizes via Cholesky and reports [`Error::InvalidCovariance`]
/// when the factorization fails.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianParams {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

impl GaussianParams {
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        let params = Self { mean, cov };
        params.validate()?;
        Ok(params)
    }

    /// One-dimensional Gaussian routed through the generic representation.
    pub fn scalar(mean: f64, var: f64) -> Result<Self> {
        Self::new(
            DVector::from_element(1, mean),
            DMatrix::from_element(1, 1, var),
        )
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn validate(&self) -> Result<()> {
        GaussianDensity::new(self).map(|_| ())
    }
}

/// A Gaussian with its Cholesky factor and normalizing constant precomputed,
/// for repeated evaluation against one parameter set.
#[derive(Debug, Clone)]
pub struct GaussianDensity {
    mean: DVector<f64>,
    chol_l: DMatrix<f64>,
    log_norm: f64,
}

impl GaussianDensity {
    pub fn new(params: &GaussianParams) -> Result<Self> {
        let d = params.mean.len();
        if params.cov.nrows() != d || params.cov.ncols() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: params.cov.nrows(),
            });
        }
        if !is_symmetric(&params.cov) {
            return Err(Error::InvalidCovariance);
        }
        let chol = Cholesky::new(params.cov.clone()).ok_or(Error::InvalidCovariance)?;
        let chol_l = chol.unpack();
        // ln det(cov) = 2 sum(ln L_ii)
        let half_log_det: f64 = chol_l.diagonal().iter().map(|v| v.ln()).sum();
        let log_norm = -0.5 * d as f64 * LN_2PI - half_log_det;
        Ok(Self {
            mean: params.mean.clone(),
            chol_l,
            log_norm,
        })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// log N(x | mean, cov), finite for all finite `x`.
    pub fn logpdf(&self, x: &DVector<f64>) -> Result<f64> {
        if x.len() != self.mean.len() {
            return Err(Error::DimensionMismatch {
                expected: self.mean.len(),
                got: x.len(),
            });
        }
        let mut diff = x - &self.mean;
        // Solve L y = diff; the quadratic form is |y|^2.
        self.chol_l.solve_lower_triangular_mut(&mut diff);
        Ok(self.log_norm - 0.5 * diff.norm_squared())
    }

    /// Draw mean + L z with z standard normal.
    pub fn sample(&self, rng: &mut SeedStream) -> DVector<f64> {
        let z = DVector::from_fn(self.mean.len(), |_, _| rng.sample(StandardNormal));
        &self.mean + &self.chol_l * z
    }
}

/// Evaluate log N(x | params) once; prefer [`GaussianDensity`] in loops.
pub fn gaussian_logpdf(x: &DVector<f64>, params: &GaussianParams) -> Result<f64> {
    GaussianDensity::new(params)?.logpdf(x)
}

/// Draw one sample from N(mean, cov).
pub fn sample_gaussian(params: &GaussianParams, rng: &mut SeedStream) -> Result<DVector<f64>> {
    Ok(GaussianDensity::new(params)?.sample(rng))
}

pub(crate) fn is_symmetric(m: &DMatrix<f64>) -> bool {
    if m.nrows() != m.ncols() {
        return false;
    }
    for i in 0..m.nrows() {
        for j in (i + 1)..m.ncols() {
            let a = m[(i, j)];
            let b = m[(j, i)];
            if (a - b).abs() > 1e-9 * a.abs().max(b.abs()).max(1.0) {
                return false;
            }
        }
    }
    true
}
