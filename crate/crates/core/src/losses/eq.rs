use serde::{Deserialize, Serialize};

use crate::array::Array3;
use crate::error::{Error, Result};
use crate::filter::{gaussian_taps, separable_renorm};
use crate::losses::Reconstructor;
use crate::models::bicubic_resize;
use crate::sensor::Degradation;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EqCfg {
    /// Downscale factor of the zoom transform.
    pub factor: f64,
    pub lambda: f64,
    /// Border width (in zoomed pixels) excluded from the comparison.
    pub margin: usize,
}

impl Default for EqCfg {
    fn default() -> Self {
        EqCfg {
            factor: 2.0,
            lambda: 1.0,
            margin: 4,
        }
    }
}

impl EqCfg {
    pub fn validate(&self) -> Result<()> {
        if !(self.factor > 1.0 && self.factor.is_finite()) {
            return Err(Error::config("train.eq.factor", "must be greater than 1"));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::config("train.eq.lambda", "must be nonnegative"));
        }
        Ok(())
    }
}

/// Anti-aliased bicubic downscale by `factor`: Gaussian pre-blur with std
/// `0.5 * factor` renormalized at the borders, then Catmull-Rom resampling
/// to `floor(n / factor)` samples per axis.
pub fn zoom_transform(x: &Array3, factor: f64) -> Result<Array3> {
    if !(factor > 1.0 && factor.is_finite()) {
        return Err(Error::config("train.eq.factor", "must be greater than 1"));
    }
    let (c, h, w) = x.shape();
    let (oh, ow) = ((h as f64 / factor).floor() as usize, (w as f64 / factor).floor() as usize);
    if oh == 0 || ow == 0 {
        return Err(Error::Shape(format!("{h}x{w} is too small to zoom by {factor}")));
    }
    let taps = gaussian_taps(0.5 * factor, 3.0, h.max(w));
    let mut blurred = Array3::zeros(c, h, w);
    for ch in 0..c {
        let p = separable_renorm(x.plane(ch), h, w, &taps, &taps);
        blurred.plane_mut(ch).copy_from_slice(&p);
    }
    Ok(bicubic_resize(&blurred, oh, ow))
}

fn lcm(a: usize, b: usize) -> usize {
    fn gcd(a: usize, b: usize) -> usize {
        if b == 0 {
            a
        } else {
            gcd(b, a % b)
        }
    }
    a / gcd(a, b) * b
}

/// Zoomed sizes are centre-cropped to multiples of this so they can be
/// degraded by `a` and reconstructed by a model needing `model_multiple`.
pub fn eq_crop_multiple(a: &Degradation, model_multiple: usize) -> usize {
    lcm(a.scale.max(1), model_multiple.max(1))
}

/// Zoomed copy of `xhat`, centre-cropped to a valid size.
pub(crate) fn eq_target(xhat: &Array3, a: &Degradation, multiple: usize, cfg: &EqCfg) -> Result<Array3> {
    let z = zoom_transform(xhat, cfg.factor)?;
    let m = eq_crop_multiple(a, multiple);
    let (h, w) = (z.rows() / m * m, z.cols() / m * m);
    if h <= 2 * cfg.margin || w <= 2 * cfg.margin {
        return Err(Error::config(
            "train.eq",
            format!(
                "zoomed estimate {}x{} leaves no interior after cropping to multiples of {m} and a margin of {}",
                z.rows(),
                z.cols(),
                cfg.margin
            ),
        ));
    }
    z.crop((z.rows() - h) / 2, (z.cols() - w) / 2, h, w)
}

/// Mean squared difference of `out` and `target` over the interior; also
/// returns `d/d out` and the per-element terms.
pub(crate) fn interior_residual(out: &Array3, target: &Array3, margin: usize) -> Result<(f64, Array3, Vec<f64>)> {
    out.ensure_same_shape(target, "equivariance output")?;
    let (c, h, w) = out.shape();
    let n = (c * (h - 2 * margin) * (w - 2 * margin)) as f64;
    let mut grad = Array3::zeros(c, h, w);
    let mut terms = Vec::new();
    for ch in 0..c {
        for r in margin..h - margin {
            for q in margin..w - margin {
                let d = out.get(ch, r, q) - target.get(ch, r, q);
                terms.push(d * d / n);
                grad.set(ch, r, q, 2.0 * d / n);
            }
        }
    }
    Ok((terms.iter().sum(), grad, terms))
}

/// Mean of `(f(A(T(xhat))) - T(xhat))^2` over the interior, with `T` the
/// zoom transform.
pub fn eq_loss(f: &impl Reconstructor, xhat: &Array3, a: &Degradation, cfg: &EqCfg) -> Result<f64> {
    cfg.validate()?;
    let target = eq_target(xhat, a, f.spatial_multiple(), cfg)?;
    let out = f.reconstruct(&a.apply(&target)?)?;
    Ok(interior_residual(&out, &target, cfg.margin)?.0)
}
