use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::array::Array3;
use crate::error::{Error, Result};
use crate::losses::Reconstructor;
use crate::sensor::Degradation;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProbeDist {
    Gaussian,
    Rademacher,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SureCfg {
    /// Noise std shared by all channels.
    pub sigma: f64,
    /// Per-channel noise std; overrides `sigma` when set.
    #[serde(default)]
    pub channel_sigma: Option<Vec<f64>>,
    pub mc_probes: usize,
    /// Probe step relative to the std of the measurement.
    pub mc_step: f64,
    pub probe: ProbeDist,
}

impl Default for SureCfg {
    fn default() -> Self {
        SureCfg {
            sigma: 0.0,
            channel_sigma: None,
            mc_probes: 1,
            mc_step: 1e-3,
            probe: ProbeDist::Rademacher,
        }
    }
}

impl SureCfg {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(Error::config("train.sure.sigma", "must be nonnegative"));
        }
        if let Some(s) = &self.channel_sigma {
            if s.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
                return Err(Error::config("train.sure.channel_sigma", "must be nonnegative"));
            }
        }
        if self.mc_probes == 0 {
            return Err(Error::config("train.sure.mc_probes", "must be at least 1"));
        }
        if !(self.mc_step > 0.0 && self.mc_step.is_finite()) {
            return Err(Error::config("train.sure.mc_step", "must be positive"));
        }
        Ok(())
    }

    /// Noise variance per channel.
    pub fn variances(&self, channels: usize) -> Result<Vec<f64>> {
        match &self.channel_sigma {
            Some(s) if s.len() != channels => Err(Error::Shape(format!(
                "{} channel noise levels for {channels} channels",
                s.len()
            ))),
            Some(s) => Ok(s.iter().map(|v| v * v).collect()),
            None => Ok(vec![self.sigma * self.sigma; channels]),
        }
    }

    /// Absolute probe step for measurement `y`.
    pub fn delta(&self, y: &Array3) -> f64 {
        let n = y.len() as f64;
        let m = y.as_slice().iter().sum::<f64>() / n;
        let sd = (y.as_slice().iter().map(|v| (v - m).powi(2)).sum::<f64>() / n).sqrt();
        if sd > 0.0 {
            self.mc_step * sd
        } else {
            self.mc_step
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SureTerms {
    /// `||A f(y) - y||^2`
    pub fidelity: f64,
    /// `-sum(sigma^2) + 2 * weighted divergence`
    pub penalty: f64,
    /// Estimated `sum_i sigma_i^2 d g_i / d y_i`.
    pub divergence: f64,
}

impl SureTerms {
    pub fn total(&self) -> f64 {
        self.fidelity + self.penalty
    }
}

pub fn mse_loss(xhat: &Array3, x: &Array3) -> Result<f64> {
    xhat.ensure_same_shape(x, "mse")?;
    Ok(xhat.sum_sq_diff(x) / x.len() as f64)
}

pub fn draw_probe(rng: &mut ChaCha8Rng, like: &Array3, dist: ProbeDist) -> Array3 {
    let (c, h, w) = like.shape();
    match dist {
        ProbeDist::Rademacher => Array3::from_fn(c, h, w, |_, _, _| if rng.random::<bool>() { 1.0 } else { -1.0 }),
        ProbeDist::Gaussian => Array3::from_fn(c, h, w, |_, _, _| rng.sample(StandardNormal)),
    }
}

/// Probe estimate of `sum_i weight_c(i) * d g_i / d y_i`.
pub fn mc_divergence_weighted(
    mut g: impl FnMut(&Array3) -> Result<Array3>,
    y: &Array3,
    weights: &[f64],
    cfg: &SureCfg,
    seed: u64,
) -> Result<f64> {
    cfg.validate()?;
    if weights.len() != y.channels() {
        return Err(Error::Shape(format!("{} weights for {} channels", weights.len(), y.channels())));
    }
    let base = g(y)?;
    base.ensure_same_shape(y, "divergence map")?;
    if !base.all_finite() {
        return Err(Error::Numeric("map produced non-finite values at the measurement".into()));
    }
    let delta = cfg.delta(y);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut total = 0.0;
    for _ in 0..cfg.mc_probes {
        let b = draw_probe(&mut rng, y, cfg.probe);
        let mut yp = y.clone();
        yp.scaled_add_assign(delta, &b);
        let gp = g(&yp)?;
        if !gp.all_finite() {
            return Err(Error::Numeric("map produced non-finite values at a probe".into()));
        }
        let mut acc = 0.0;
        for (c, w) in weights.iter().enumerate() {
            let s: f64 = b
                .plane(c)
                .iter()
                .zip(gp.plane(c).iter().zip(base.plane(c)))
                .map(|(bv, (p, q))| bv * (p - q))
                .sum();
            acc += w * s;
        }
        total += acc / delta;
    }
    Ok(total / cfg.mc_probes as f64)
}

/// Probe estimate of `div g(y)` with the SURE step and probe settings.
pub fn mc_divergence(g: impl FnMut(&Array3) -> Result<Array3>, y: &Array3, cfg: &SureCfg, seed: u64) -> Result<f64> {
    mc_divergence_weighted(g, y, &vec![1.0; y.channels()], cfg, seed)
}

/// `||A f(y) - y||^2 - sum(sigma^2) + 2 sum(sigma^2 * div)`, as sums.
pub fn sure_loss(
    f: &impl Reconstructor,
    y: &Array3,
    a: &Degradation,
    cfg: &SureCfg,
    seed: u64,
) -> Result<SureTerms> {
    let var = cfg.variances(y.channels())?;
    let g = |v: &Array3| a.apply(&f.reconstruct(v)?);
    let ay = g(y)?;
    ay.ensure_same_shape(y, "A(f(y)) against y")?;
    let fidelity = ay.sum_sq_diff(y);
    let plane = y.plane_len() as f64;
    let trace: f64 = var.iter().map(|v| v * plane).sum();
    let divergence = if var.iter().all(|v| *v == 0.0) {
        0.0
    } else {
        mc_divergence_weighted(g, y, &var, cfg, seed)?
    };
    Ok(SureTerms {
        fidelity,
        penalty: -trace + 2.0 * divergence,
        divergence,
    })
}
