//! Residual resampling.
//!
//! Each particle is first granted `floor(J * w_j)` offspring deterministically;
//! the remaining slots are filled by multinomial draws on the fractional
//! residuals. This keeps resampling variance well below plain multinomial
//! resampling while guaranteeing the deterministic floor.

use crate::error::{Error, Result};
use crate::filter::ParticleSet;
use crate::kernels::sample_categorical;
use crate::rng::SeedStream;

/// Offspring counts of a residual-resampling pass over normalized weights.
///
/// The counts sum to the input length, and count `j` is always at least
/// `floor(J * w_j)`.
pub fn residual_offspring_counts(weights: &[f64], rng: &mut SeedStream) -> Result<Vec<usize>> {
    let j = weights.len();
    if j == 0 {
        return Err(Error::InvalidParameter("no weights to resample".into()));
    }
    let total: f64 = weights.iter().sum();
    if weights.iter().any(|&w| !(w >= 0.0) || !w.is_finite()) || (total - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidParameter(format!(
            "residual resampling requires normalized weights, sum = {total}"
        )));
    }

    let mut counts = Vec::with_capacity(j);
    let mut residuals = Vec::with_capacity(j);
    let mut assigned = 0usize;
    for &w in weights {
        let target = j as f64 * w;
        let floor = target.floor();
        counts.push(floor as usize);
        residuals.push(target - floor);
        assigned += floor as usize;
    }
    for _ in assigned..j {
        let winner = sample_categorical(&residuals, rng)?;
        counts[winner] += 1;
    }
    Ok(counts)
}

/// Resample a normalized particle set; the output carries uniform weights.
pub fn residual_resample(particles: &ParticleSet, rng: &mut SeedStream) -> Result<ParticleSet> {
    let counts = residual_offspring_counts(particles.weights(), rng)?;
    let mut states = Vec::with_capacity(particles.len());
    for (state, &count) in particles.states().iter().zip(&counts) {
        for _ in 0..count {
            states.push(state.clone());
        }
    }
    ParticleSet::uniform(states)
}
