//! Gamma sampling in the shape/scale convention.

use rand::Rng;
use rand_distr::Gamma;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SeedStream;

/// Shape/scale parameters of a Gamma distribution (mean = shape * scale,
/// variance = shape * scale^2).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaParams {
    pub shape: f64,
    pub scale: f64,
}

impl GammaParams {
    pub fn new(shape: f64, scale: f64) -> Result<Self> {
        if !(shape > 0.0 && shape.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "gamma shape must be positive, got {shape}"
            )));
        }
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "gamma scale must be positive, got {scale}"
            )));
        }
        Ok(Self { shape, scale })
    }

    pub fn mean(&self) -> f64 {
        self.shape * self.scale
    }

    pub fn variance(&self) -> f64 {
        self.shape * self.scale * self.scale
    }
}

/// Draw one Gamma(shape, scale) variate.
pub fn sample_gamma(params: &GammaParams, rng: &mut SeedStream) -> Result<f64> {
    GammaParams::new(params.shape, params.scale)?;
    let dist = Gamma::new(params.shape, params.scale)
        .map_err(|e| Error::InvalidParameter(format!("gamma: {e}")))?;
    Ok(rng.sample(dist))
}
