use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::array::Array3;
use crate::error::{Error, Result};
use crate::filter::{gaussian_taps, separable_renorm};
use crate::sensor::{BandId, HyperCube, Space};

/// Radiance-like magnitude of synthetic scenes.
const RADIANCE_SCALE: f64 = 2.0e-7;
// unit field std at smoothness 1
const FIELD_GAIN: f64 = 7.0898154036220635;

fn spectrum(rng: &mut ChaCha8Rng, channels: usize) -> Vec<f64> {
    let level = rng.random_range(0.5..1.5);
    let freq = rng.random_range(0.3..2.0);
    let phase = rng.random_range(0.0..1.0);
    let lines: Vec<(f64, f64, f64)> = (0..rng.random_range(2..6))
        .map(|_| {
            (
                rng.random_range(0.0..channels as f64),
                rng.random_range(0.5..(channels as f64 / 12.0).max(1.0)),
                rng.random_range(0.2..0.6),
            )
        })
        .collect();
    (0..channels)
        .map(|c| {
            let x = c as f64 / channels.max(1) as f64;
            let mut v = level * (1.0 + 0.3 * (std::f64::consts::TAU * (phase + freq * x)).sin());
            for (c0, width, depth) in &lines {
                v *= 1.0 - depth * (-(c as f64 - c0).powi(2) / (2.0 * width * width)).exp();
            }
            v
        })
        .collect()
}

fn abundance(rng: &mut ChaCha8Rng, h: usize, w: usize, smoothness: f64) -> Vec<f64> {
    let noise: Vec<f64> = (0..h * w).map(|_| rng.sample(StandardNormal)).collect();
    let sigma = 2.0 * smoothness;
    let taps = gaussian_taps(sigma, 4.0, h.max(w));
    let field = separable_renorm(&noise, h, w, &taps, &taps);
    let mut a: Vec<f64> = field
        .iter()
        .map(|f| 1.0 + 0.25 * (FIELD_GAIN * f).tanh())
        .collect();
    for _ in 0..rng.random_range(2..6) {
        let (r0, c0) = (rng.random_range(0.0..h as f64), rng.random_range(0.0..w as f64));
        let rad: f64 = rng.random_range(1.5..4.0);
        let amp: f64 = rng.random_range(0.3..0.8);
        for r in 0..h {
            for q in 0..w {
                let d2 = (r as f64 - r0).powi(2) + (q as f64 - c0).powi(2);
                a[r * w + q] += amp * (-d2 / (2.0 * rad * rad)).exp();
            }
        }
    }
    let theta: f64 = rng.random_range(0.0..std::f64::consts::TAU);
    let (nr, nc) = (theta.sin(), theta.cos());
    let offset = rng.random_range(-0.3..0.3) * (h.min(w) as f64);
    let step = rng.random_range(0.15..0.35);
    let (hc, wc) = (h as f64 / 2.0, w as f64 / 2.0);
    for r in 0..h {
        for q in 0..w {
            if (r as f64 - hc) * nr + (q as f64 - wc) * nc > offset {
                a[r * w + q] += step;
            }
        }
    }
    a
}

/// Positive low-rank scene: `spectral_rank` spectra mixed by smooth
/// abundance maps with bright blobs and a straight step edge.
pub fn synth_scene(
    band_id: BandId,
    channels: usize,
    h: usize,
    w: usize,
    seed: u64,
    smoothness: f64,
    spectral_rank: usize,
) -> Result<HyperCube> {
    if spectral_rank == 0 || spectral_rank > channels {
        return Err(Error::config(
            "synth.spectral_rank",
            format!("must lie in 1..={channels}, got {spectral_rank}"),
        ));
    }
    if !(smoothness > 0.0) {
        return Err(Error::config("synth.smoothness", "must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let spectra: Vec<Vec<f64>> = (0..spectral_rank).map(|_| spectrum(&mut rng, channels)).collect();
    let maps: Vec<Vec<f64>> = (0..spectral_rank)
        .map(|_| abundance(&mut rng, h, w, smoothness))
        .collect();
    let mut data = Array3::zeros(channels, h, w);
    let norm = RADIANCE_SCALE / spectral_rank as f64;
    for (c, plane) in data.planes_mut().enumerate() {
        for (s, m) in spectra.iter().zip(&maps) {
            let g = s[c] * norm;
            plane.iter_mut().zip(m).for_each(|(v, a)| *v += g * a);
        }
    }
    HyperCube::new(data, band_id, Space::Raw)
}
