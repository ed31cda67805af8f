use serde::{Deserialize, Serialize};

use crate::array::Array3;
use crate::error::{Error, Result};
use crate::filter::{gaussian_taps, separable_renorm};
use crate::sensor::HyperCube;

pub const PSNR_CAP: f64 = 100.0;
const K1: f64 = 0.01;
const K2: f64 = 0.03;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Psnr {
    pub db: f64,
    pub capped: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReferenceMetrics {
    pub psnr: Psnr,
    pub ssim: f64,
    pub scc: f64,
}

/// `10 log10(R^2 / MSE)`, capped at `PSNR_CAP`.
pub fn psnr(xhat: &Array3, x: &Array3, range: f64) -> Result<Psnr> {
    xhat.ensure_same_shape(x, "psnr")?;
    if !(range > 0.0 && range.is_finite()) {
        return Err(Error::Numeric(format!("psnr range must be positive, got {range}")));
    }
    let mse = xhat.sum_sq_diff(x) / x.len() as f64;
    let db = 10.0 * (range * range / mse).log10();
    if !(db < PSNR_CAP) {
        return Ok(Psnr { db: PSNR_CAP, capped: true });
    }
    Ok(Psnr { db, capped: false })
}

/// Max minus min of `x`, or 1 when `x` is constant.
pub fn dynamic_range(x: &Array3) -> f64 {
    let (lo, hi) = x.min_max();
    if hi > lo {
        hi - lo
    } else {
        1.0
    }
}

/// Mean SSIM map over pixels (11x11 Gaussian window, std 1.5, weights
/// renormalized at the borders), averaged over channels.
pub fn ssim(xhat: &Array3, x: &Array3, range: f64) -> Result<f64> {
    xhat.ensure_same_shape(x, "ssim")?;
    let (c, h, w) = x.shape();
    let taps = gaussian_taps(1.5, 10.0, 5);
    let c1 = (K1 * range).powi(2);
    let c2 = (K2 * range).powi(2);
    let blur = |p: &[f64]| separable_renorm(p, h, w, &taps, &taps);
    let mut total = 0.0;
    for ch in 0..c {
        let (a, b) = (xhat.plane(ch), x.plane(ch));
        let aa: Vec<f64> = a.iter().map(|v| v * v).collect();
        let bb: Vec<f64> = b.iter().map(|v| v * v).collect();
        let ab: Vec<f64> = a.iter().zip(b).map(|(p, q)| p * q).collect();
        let (ma, mb, saa, sbb, sab) = (blur(a), blur(b), blur(&aa), blur(&bb), blur(&ab));
        let mut acc = 0.0;
        for i in 0..h * w {
            let va = saa[i] - ma[i] * ma[i];
            let vb = sbb[i] - mb[i] * mb[i];
            let cov = sab[i] - ma[i] * mb[i];
            acc += ((2.0 * ma[i] * mb[i] + c1) * (2.0 * cov + c2))
                / ((ma[i] * ma[i] + mb[i] * mb[i] + c1) * (va + vb + c2));
        }
        total += acc / (h * w) as f64;
    }
    Ok((total / c as f64).clamp(-1.0, 1.0))
}

/// 3x3 Laplacian `[[-1,-1,-1],[-1,8,-1],[-1,-1,-1]]` on the valid interior.
pub fn laplacian(p: &[f64], h: usize, w: usize) -> Vec<f64> {
    if h < 3 || w < 3 {
        return Vec::new();
    }
    let mut out = Vec::with_capacity((h - 2) * (w - 2));
    for r in 1..h - 1 {
        for q in 1..w - 1 {
            let mut s = 9.0 * p[r * w + q];
            for dr in 0..3 {
                for dq in 0..3 {
                    s -= p[(r + dr - 1) * w + q + dq - 1];
                }
            }
            out.push(s);
        }
    }
    out
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa == 0.0 && sbb == 0.0 {
        return if a == b { 1.0 } else { 0.0 };
    }
    if saa == 0.0 || sbb == 0.0 {
        return 0.0;
    }
    (sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0)
}

/// Correlation of Laplacian-filtered planes, averaged over channels. Two
/// flat planes count as 1 when equal; one flat plane counts as 0.
pub fn scc(xhat: &Array3, x: &Array3) -> Result<f64> {
    xhat.ensure_same_shape(x, "scc")?;
    let (c, h, w) = x.shape();
    if h < 3 || w < 3 {
        return Err(Error::Shape(format!("scc needs at least 3x3 planes, got {h}x{w}")));
    }
    let s: f64 = (0..c)
        .map(|ch| pearson(&laplacian(xhat.plane(ch), h, w), &laplacian(x.plane(ch), h, w)))
        .sum();
    Ok(s / c as f64)
}

/// PSNR, SSIM and SCC of `xhat` against `x`; `range` defaults to the
/// dynamic range of `x`.
pub fn reference_metrics(xhat: &HyperCube, x: &HyperCube, range: Option<f64>) -> Result<ReferenceMetrics> {
    if xhat.space != x.space || xhat.band_id != x.band_id {
        return Err(Error::Contract(format!(
            "comparing {} {:?} against {} {:?}",
            xhat.band_id, xhat.space, x.band_id, x.space
        )));
    }
    let r = range.unwrap_or_else(|| dynamic_range(&x.data));
    Ok(ReferenceMetrics {
        psnr: psnr(&xhat.data, &x.data, r)?,
        ssim: ssim(&xhat.data, &x.data, r)?,
        scc: scc(&xhat.data, &x.data)?,
    })
}
