use serde::{Deserialize, Serialize};

use crate::array::Array3;
use crate::error::Result;
use crate::metrics::{dynamic_range, psnr, Psnr};
use crate::sensor::{Degradation, HyperCube};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlindMetrics {
    /// `psnr(A(xhat), y)` with the range of `y`.
    pub consistency: Psnr,
    pub sharpness: f64,
}

/// Mean Sobel gradient magnitude over the valid interior of one plane.
fn sobel_mean(p: &[f64], h: usize, w: usize) -> f64 {
    if h < 3 || w < 3 {
        return 0.0;
    }
    let at = |r: usize, q: usize| p[r * w + q];
    let mut s = 0.0;
    for r in 1..h - 1 {
        for q in 1..w - 1 {
            let gx = (at(r - 1, q + 1) + 2.0 * at(r, q + 1) + at(r + 1, q + 1))
                - (at(r - 1, q - 1) + 2.0 * at(r, q - 1) + at(r + 1, q - 1));
            let gy = (at(r + 1, q - 1) + 2.0 * at(r + 1, q) + at(r + 1, q + 1))
                - (at(r - 1, q - 1) + 2.0 * at(r - 1, q) + at(r - 1, q + 1));
            s += (gx * gx + gy * gy).sqrt();
        }
    }
    s / ((h - 2) * (w - 2)) as f64
}

/// Mean population variance over all fully contained 5x5 windows, with
/// each window shifted by its first sample.
fn local_variance_mean(p: &[f64], h: usize, w: usize) -> f64 {
    if h < 5 || w < 5 {
        return 0.0;
    }
    let mut s = 0.0;
    for r in 0..=h - 5 {
        for q in 0..=w - 5 {
            let (mut a, mut b) = (0.0, 0.0);
            let k = p[r * w + q];
            for dr in 0..5 {
                for dq in 0..5 {
                    let v = p[(r + dr) * w + q + dq] - k;
                    a += v;
                    b += v * v;
                }
            }
            let m = a / 25.0;
            s += (b / 25.0 - m * m).max(0.0);
        }
    }
    s / ((h - 4) * (w - 4)) as f64
}

/// `0.5 * mean Sobel magnitude + 0.5 * mean 5x5 local variance`, per
/// channel then averaged.
pub fn sharpness(x: &Array3) -> f64 {
    let (c, h, w) = x.shape();
    let s: f64 = (0..c)
        .map(|ch| 0.5 * sobel_mean(x.plane(ch), h, w) + 0.5 * local_variance_mean(x.plane(ch), h, w))
        .sum();
    s / c as f64
}

pub fn consistency(xhat: &Array3, y: &Array3, a: &Degradation) -> Result<Psnr> {
    let ax = a.apply(xhat)?;
    ax.ensure_same_shape(y, "A(xhat) against y")?;
    psnr(&ax, y, dynamic_range(y))
}

pub fn blind_metrics(xhat: &HyperCube, y: &HyperCube, a: &Degradation) -> Result<BlindMetrics> {
    Ok(BlindMetrics {
        consistency: consistency(&xhat.data, &y.data, a)?,
        sharpness: sharpness(&xhat.data),
    })
}
