//! Dirichlet and categorical sampling.

use rand::Rng;
use rand_distr::Gamma;

use crate::error::{Error, Result};
use crate::rng::SeedStream;

/// Draw a probability vector from a Dirichlet with the given concentrations.
///
/// Uses the standard Gamma(c_i, 1) normalization; components are positive and
/// sum to one up to floating-point rounding.
pub fn sample_dirichlet(concentrations: &[f64], rng: &mut SeedStream) -> Result<Vec<f64>> {
    if concentrations.is_empty() {
        return Err(Error::InvalidParameter(
            "dirichlet needs at least one concentration".into(),
        ));
    }
    for &c in concentrations {
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "dirichlet concentrations must be positive, got {c}"
            )));
        }
    }
    if concentrations.len() == 1 {
        return Ok(vec![1.0]);
    }
    // Tiny concentrations can make every Gamma draw underflow to zero; retry a
    // bounded number of times before giving up.
    for _ in 0..64 {
        let gammas: Vec<f64> = concentrations
            .iter()
            .map(|&c| {
                Gamma::new(c, 1.0)
                    .map(|g| rng.sample(g))
                    .map_err(|e| Error::InvalidParameter(format!("dirichlet: {e}")))
            })
            .collect::<Result<_>>()?;
        let total: f64 = gammas.iter().sum();
        if total > 0.0 {
            return Ok(gammas.into_iter().map(|g| g / total).collect());
        }
    }
    Err(Error::DegenerateCovariance { attempts: 64 })
}

/// Draw an index with probability proportional to its (unnormalized,
/// nonnegative) weight.
pub fn sample_categorical(weights: &[f64], rng: &mut SeedStream) -> Result<usize> {
    if weights.is_empty() {
        return Err(Error::AllZeroWeights);
    }
    for &w in weights {
        if !(w >= 0.0 && w.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "categorical weights must be nonnegative and finite, got {w}"
            )));
        }
    }
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return Err(Error::AllZeroWeights);
    }
    let u: f64 = rng.random::<f64>() * total;
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, &w) in weights.iter().enumerate() {
        if w > 0.0 {
            acc += w;
            last_positive = i;
            if u < acc {
                return Ok(i);
            }
        }
    }
    // Round-off can leave acc marginally below total; the last positive
    // weight owns the remainder.
    Ok(last_positive)
}
