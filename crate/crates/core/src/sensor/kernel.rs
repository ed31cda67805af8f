use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sensor::BandSpec;

pub const DEFAULT_TRUNCATION: f64 = 4.0;

/// Separable anisotropic Gaussian; rows run along-track, columns cross-track.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlurKernel {
    pub weights: Vec<f64>,
    pub rows: usize,
    pub cols: usize,
    pub along: Vec<f64>,
    pub cross: Vec<f64>,
    pub sigma_along: f64,
    pub sigma_cross: f64,
}

/// Unit-sum sampled Gaussian of side `2*ceil(truncation*sigma)+1`.
pub fn gaussian_1d(sigma: f64, truncation: f64) -> Result<Vec<f64>> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidSpec(format!(
            "blur sigma must be positive, got {sigma}"
        )));
    }
    if !(truncation > 0.0 && truncation.is_finite()) {
        return Err(Error::InvalidSpec(format!(
            "truncation must be positive, got {truncation}"
        )));
    }
    let radius = (truncation * sigma).ceil() as i64;
    let mut k: Vec<f64> = (-radius..=radius)
        .map(|u| (-(u * u) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= total);
    Ok(k)
}

pub fn make_blur_kernel(spec: &BandSpec, truncation: f64) -> Result<BlurKernel> {
    BlurKernel::new(spec.blur_sigma_along, spec.blur_sigma_cross, truncation)
}

impl BlurKernel {
    pub fn new(sigma_along: f64, sigma_cross: f64, truncation: f64) -> Result<Self> {
        let along = gaussian_1d(sigma_along, truncation)?;
        let cross = gaussian_1d(sigma_cross, truncation)?;
        let weights = along
            .iter()
            .flat_map(|a| cross.iter().map(move |c| a * c))
            .collect();
        Ok(BlurKernel {
            weights,
            rows: along.len(),
            cols: cross.len(),
            along,
            cross,
            sigma_along,
            sigma_cross,
        })
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.weights[r * self.cols + c]
    }

    pub fn radius(&self) -> (usize, usize) {
        (self.rows / 2, self.cols / 2)
    }
}
