//! Seedable samplers and log-density evaluation for the distribution families
//! the filter needs: Gaussian (any dimension), Gamma, inverse-Wishart,
//! normal-inverse-Wishart, Dirichlet, and categorical.
//!
//! Everything is stateless apart from the caller-supplied [`SeedStream`], all
//! densities are evaluated in the log domain, and scalar cases route through
//! the same generic code paths as the multivariate ones (a scalar Gaussian is
//! a 1-dimensional [`GaussianParams`], an inverse-gamma a 1x1 inverse-Wishart).

mod gamma;
mod gaussian;
mod simplex;
mod wishart;

pub use gamma::{sample_gamma, GammaParams};
pub use gaussian::{gaussian_logpdf, sample_gaussian, GaussianDensity, GaussianParams};
pub use simplex::{sample_categorical, sample_dirichlet};
pub use wishart::{sample_inverse_wishart, sample_niw, NiwParams};

pub(crate) const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Numerically stable log(sum(exp(xs))).
///
/// Returns negative infinity for an empty or all-negative-infinity input.
pub fn logsumexp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

#[cfg(test)]
mod tests {
    use super::logsumexp;

    #[test]
    fn logsumexp_matches_direct_sum() {
        let xs = [-1.0f64, 0.5, 2.0];
        let direct: f64 = xs.iter().map(|x| x.exp()).sum::<f64>().ln();
        assert!((logsumexp(&xs) - direct).abs() < 1e-12);
    }

    #[test]
    fn logsumexp_is_shift_stable() {
        let xs = [-10_000.0, -10_001.0];
        let shifted: Vec<f64> = xs.iter().map(|x| x + 10_000.0).collect();
        assert!((logsumexp(&xs) + 10_000.0 - logsumexp(&shifted)).abs() < 1e-12);
    }

    #[test]
    fn logsumexp_degenerate_inputs() {
        assert_eq!(logsumexp(&[]), f64::NEG_INFINITY);
        assert_eq!(
            logsumexp(&[f64::NEG_INFINITY, f64::NEG_INFINITY]),
            f64::NEG_INFINITY
        );
        assert!((logsumexp(&[f64::NEG_INFINITY, 0.0]) - 0.0).abs() < 1e-15);
    }
}
