use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::sensor::HyperCube;

pub fn snr_db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Noise std `mu / snr_linear`, converting from decibels when `is_db`.
pub fn noise_sigma_from_metadata(snr: f64, is_db: bool, mu: f64) -> Result<f64> {
    let linear = if is_db { snr_db_to_linear(snr) } else { snr };
    if !(linear > 0.0 && linear.is_finite()) {
        return Err(Error::InvalidMetadata(format!(
            "SNR must be positive, got {snr}{}",
            if is_db { " dB" } else { "" }
        )));
    }
    if !(mu > 0.0 && mu.is_finite()) {
        return Err(Error::InvalidMetadata(format!(
            "mean radiance must be positive, got {mu}"
        )));
    }
    Ok(mu / linear)
}

pub fn add_noise(y: &HyperCube, sigma: f64, seed: u64) -> Result<HyperCube> {
    add_noise_per_channel(y, &vec![sigma; y.channels()], seed)
}

/// Adds i.i.d. Gaussian noise with a channel-specific std.
pub fn add_noise_per_channel(y: &HyperCube, sigmas: &[f64], seed: u64) -> Result<HyperCube> {
    if sigmas.len() != y.channels() {
        return Err(Error::Shape(format!(
            "{} noise levels for {} channels",
            sigmas.len(),
            y.channels()
        )));
    }
    if let Some(s) = sigmas.iter().find(|s| !(**s >= 0.0 && s.is_finite())) {
        return Err(Error::InvalidMetadata(format!(
            "noise std must be nonnegative, got {s}"
        )));
    }
    let mut out = y.data.clone();
    if sigmas.iter().all(|s| *s == 0.0) {
        return Ok(y.with_data(out));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let unit = Normal::new(0.0, 1.0).expect("unit normal");
    for (plane, &s) in out.planes_mut().zip(sigmas) {
        for v in plane.iter_mut() {
            *v += s * unit.sample(&mut rng);
        }
    }
    Ok(y.with_data(out))
}
