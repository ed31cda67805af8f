use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::losses::{EqCfg, ProbeDist, SureCfg};
use crate::models::ArchId;
use crate::sensor::BandId;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Setting {
    /// Supervised on simulated (LR, HR) pairs with squared error.
    SlLrHr,
    /// Self-supervised on simulated LR measurements only.
    SslLrHr,
    /// Self-supervised on native patches treated as the measurement.
    SslGtShr,
}

impl Setting {
    pub fn is_self_supervised(self) -> bool {
        self != Setting::SlLrHr
    }
}

impl std::fmt::Display for Setting {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Setting::SlLrHr => "sl_lr_hr",
            Setting::SslLrHr => "ssl_lr_hr",
            Setting::SslGtShr => "ssl_gt_shr",
        })
    }
}

/// SURE options; the noise level comes from the dataset unless overridden.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SureOpts {
    pub mc_probes: usize,
    pub mc_step: f64,
    pub probe: ProbeDist,
    /// Normalized-space std applied to every channel.
    pub sigma: Option<f64>,
}

impl Default for SureOpts {
    fn default() -> Self {
        let d = SureCfg::default();
        SureOpts {
            mc_probes: d.mc_probes,
            mc_step: d.mc_step,
            probe: d.probe,
            sigma: None,
        }
    }
}

impl SureOpts {
    pub fn to_cfg(&self, channel_sigma: &[f64]) -> SureCfg {
        match self.sigma {
            Some(s) => SureCfg {
                sigma: s,
                channel_sigma: None,
                mc_probes: self.mc_probes,
                mc_step: self.mc_step,
                probe: self.probe,
            },
            None => SureCfg {
                sigma: 0.0,
                channel_sigma: Some(channel_sigma.to_vec()),
                mc_probes: self.mc_probes,
                mc_step: self.mc_step,
                probe: self.probe,
            },
        }
    }
}

/// Flags for the operator, noise-level and patch-size experiments.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Diagnostics {
    /// Use this band's blur in the training losses instead of the data band's.
    pub operator_band: Option<BandId>,
    /// Add noise so the measurement std matches this band's.
    pub match_snr_band: Option<BandId>,
    /// Measurement patch side used for training.
    pub patch_size: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub setting: Setting,
    pub architecture: ArchId,
    pub band_id: BandId,
    /// Reduced-width variant of the architecture.
    pub toy: bool,
    pub lr0: f64,
    pub plateau_factor: f64,
    pub plateau_patience: usize,
    pub plateau_threshold: f64,
    pub min_lr: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Caps the optimizer steps per epoch.
    pub steps_per_epoch: Option<usize>,
    /// Caps the validation samples per epoch.
    pub val_limit: Option<usize>,
    pub seed: u64,
    pub sure: SureOpts,
    /// Equivariance term; `None` trains with SURE alone.
    pub eq: Option<EqCfg>,
    pub diagnostics: Diagnostics,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            setting: Setting::SslLrHr,
            architecture: ArchId::Unet800k,
            band_id: BandId::Bd3,
            toy: false,
            lr0: 1e-3,
            plateau_factor: 0.1,
            plateau_patience: 3,
            plateau_threshold: 1e-4,
            min_lr: 1e-6,
            batch_size: 1,
            max_epochs: 50,
            steps_per_epoch: None,
            val_limit: None,
            seed: 0,
            sure: SureOpts::default(),
            eq: Some(EqCfg::default()),
            diagnostics: Diagnostics::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::config("train.batch_size", "must be at least 1"));
        }
        if self.plateau_patience == 0 {
            return Err(Error::config("train.plateau_patience", "must be at least 1"));
        }
        if !(self.lr0 > 0.0 && self.lr0.is_finite()) {
            return Err(Error::config("train.lr0", "must be positive"));
        }
        if !(self.plateau_factor > 0.0 && self.plateau_factor < 1.0) {
            return Err(Error::config("train.plateau_factor", "must lie in (0, 1)"));
        }
        if !(self.min_lr > 0.0 && self.min_lr <= self.lr0) {
            return Err(Error::config("train.min_lr", "must lie in (0, lr0]"));
        }
        if self.max_epochs == 0 {
            return Err(Error::config("train.max_epochs", "must be at least 1"));
        }
        if self.steps_per_epoch == Some(0) || self.val_limit == Some(0) {
            return Err(Error::config("train", "step and validation caps must be positive"));
        }
        if self.sure.mc_probes == 0 {
            return Err(Error::config("train.sure.mc_probes", "must be at least 1"));
        }
        if !(self.sure.mc_step > 0.0) {
            return Err(Error::config("train.sure.mc_step", "must be positive"));
        }
        if let Some(e) = &self.eq {
            e.validate()?;
        }
        if self.diagnostics.patch_size == Some(0) {
            return Err(Error::config("train.diagnostics.patch_size", "must be positive"));
        }
        Ok(())
    }

    pub fn fingerprint(&self) -> String {
        hex::encode(Sha256::digest(serde_json::to_string(self).expect("config serializes").as_bytes()))
    }
}
