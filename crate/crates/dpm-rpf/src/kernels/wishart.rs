//! Inverse-Wishart and normal-inverse-Wishart sampling.

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::Rng;
use rand_distr::{ChiSquared, StandardNormal};
use serde::{Deserialize, Serialize};

use super::gaussian::{is_symmetric, GaussianDensity, GaussianParams};
use crate::error::{Error, Result};
use crate::rng::SeedStream;

/// Hyper-parameters of a normal-inverse-Wishart distribution over a Gaussian's
/// (mean, covariance): location `mu0`, precision scale `rho`, degrees of
/// freedom `kappa`, and scale matrix `w`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NiwParams {
    pub mu0: DVector<f64>,
    pub rho: f64,
    pub kappa: f64,
    pub w: DMatrix<f64>,
}

impl NiwParams {
    pub fn new(mu0: DVector<f64>, rho: f64, kappa: f64, w: DMatrix<f64>) -> Result<Self> {
        let params = Self { mu0, rho, kappa, w };
        params.validate()?;
        Ok(params)
    }

    /// One-dimensional hyper-parameters routed through the generic code path.
    pub fn scalar(mu0: f64, rho: f64, kappa: f64, w: f64) -> Result<Self> {
        Self::new(
            DVector::from_element(1, mu0),
            rho,
            kappa,
            DMatrix::from_element(1, 1, w),
        )
    }

    pub fn dim(&self) -> usize {
        self.mu0.len()
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.mu0.len();
        if !(self.rho > 0.0 && self.rho.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "niw rho must be positive, got {}",
                self.rho
            )));
        }
        if !(self.kappa > d as f64 - 1.0 && self.kappa.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "niw kappa must exceed d - 1 = {}, got {}",
                d as f64 - 1.0,
                self.kappa
            )));
        }
        if self.w.nrows() != d || self.w.ncols() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: self.w.nrows(),
            });
        }
        if !is_symmetric(&self.w) {
            return Err(Error::InvalidCovariance);
        }
        Cholesky::new(self.w.clone())
            .map(|_| ())
            .ok_or(Error::InvalidCovariance)
    }
}

/// Draw a covariance matrix from an inverse-Wishart with `kappa` degrees of
/// freedom and scale matrix `w` (mean `w / (kappa - d - 1)` when that exists).
///
/// The draw inverts a Bartlett-decomposed Wishart(kappa, w^-1) sample through
/// triangular solves, so the result is symmetric positive definite by
/// construction.
pub fn sample_inverse_wishart(
    kappa: f64,
    w: &DMatrix<f64>,
    rng: &mut SeedStream,
) -> Result<DMatrix<f64>> {
    let d = w.nrows();
    if w.ncols() != d || d == 0 {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: w.ncols(),
        });
    }
    if !(kappa > d as f64 - 1.0 && kappa.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "inverse-wishart kappa must exceed d - 1 = {}, got {kappa}",
            d as f64 - 1.0
        )));
    }
    if !is_symmetric(w) {
        return Err(Error::InvalidCovariance);
    }
    // X ~ Wishart(kappa, w^-1) via Bartlett: X = (Lv A)(Lv A)^T with
    // Lv = chol(w^-1), A lower triangular, A_ii^2 ~ chi2(kappa - i),
    // A_ij ~ N(0,1) below the diagonal. Then the draw is X^-1 = U^T U
    // where U = (Lv A)^-1 comes from a triangular solve.
    let chol_w = Cholesky::new(w.clone()).ok_or(Error::InvalidCovariance)?;
    // chol(w^-1) = (L_w^-1)^T is upper triangular; use the equivalent lower
    // factor of w^-1 obtained by inverting and transposing, i.e. solve with
    // L_w^T. Simpler: w^-1 = L_w^-T L_w^-1, so with T = L_w^-T A the product
    // T T^T has the right distribution, and L_w^T T = A is a triangular solve.
    let mut a = DMatrix::zeros(d, d);
    for i in 0..d {
        let chi = ChiSquared::new(kappa - i as f64)
            .map_err(|e| Error::InvalidParameter(format!("chi-squared: {e}")))?;
        a[(i, i)] = rng.sample(chi).sqrt();
        for j in 0..i {
            a[(i, j)] = rng.sample(StandardNormal);
        }
    }
    // T = L_w^-T A (not triangular in general order, but T T^T = W^-1-Bartlett).
    let l_w = chol_w.unpack();
    let t = l_w
        .transpose()
        .solve_upper_triangular(&a)
        .ok_or(Error::InvalidCovariance)?;
    // X = T T^T, and the inverse-Wishart draw is X^-1 = (T^-1)^T (T^-1).
    // T is not triangular, so invert via its square form.
    let x = &t * t.transpose();
    let chol_x = Cholesky::new(x).ok_or(Error::DegenerateCovariance { attempts: 1 })?;
    let sigma = chol_x.inverse();
    // Guard against round-off asymmetry before handing the matrix out.
    let sigma = symmetrize(&sigma);
    Ok(sigma)
}

/// Draw (mean, covariance) from a normal-inverse-Wishart: covariance from the
/// inverse-Wishart part, then mean ~ N(mu0, covariance / rho).
pub fn sample_niw(params: &NiwParams, rng: &mut SeedStream) -> Result<(DVector<f64>, DMatrix<f64>)> {
    params.validate()?;
    let sigma = sample_inverse_wishart(params.kappa, &params.w, rng)?;
    let mean_params = GaussianParams {
        mean: params.mu0.clone(),
        cov: &sigma / params.rho,
    };
    let mu = GaussianDensity::new(&mean_params)
        .map_err(|_| Error::DegenerateCovariance { attempts: 1 })?
        .sample(rng);
    Ok((mu, sigma))
}

pub(crate) fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}
