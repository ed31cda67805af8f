use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::models::{ArchId, Init, ModelCfg};
use crate::sensor::BandId;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

/// Learnable tensors of one architecture instance, in layer order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub arch: ArchId,
    pub band_id: BandId,
    pub cfg: ModelCfg,
    pub scale: usize,
    pub tensors: Vec<ParamTensor>,
    pub fingerprint: String,
    #[serde(skip)]
    index: BTreeMap<String, usize>,
}

/// Hash of everything that fixes the parameter layout.
pub fn config_fingerprint(arch: ArchId, band: BandId, cfg: &ModelCfg, scale: usize) -> String {
    let text = serde_json::json!({
        "arch": arch,
        "band": band,
        "cfg": cfg,
        "scale": scale,
    })
    .to_string();
    hex::encode(Sha256::digest(text.as_bytes()))
}

impl ModelParams {
    /// Fan-in variance scaling; the residual head starts at zero.
    pub fn init(arch: ArchId, band_id: BandId, cfg: ModelCfg, scale: usize, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let tensors = cfg
            .layers()
            .into_iter()
            .map(|l| {
                let n: usize = l.shape.iter().product();
                let data = match l.init {
                    Init::Zero => vec![0.0; n],
                    Init::FanIn(fan) => {
                        let d = Normal::new(0.0, (1.0 / fan as f64).sqrt()).expect("positive std");
                        (0..n).map(|_| d.sample(&mut rng)).collect()
                    }
                };
                ParamTensor {
                    name: l.name,
                    shape: l.shape,
                    data,
                }
            })
            .collect();
        let fingerprint = config_fingerprint(arch, band_id, &cfg, scale);
        let mut p = ModelParams {
            arch,
            band_id,
            cfg,
            scale,
            tensors,
            fingerprint,
            index: BTreeMap::new(),
        };
        p.reindex();
        Ok(p)
    }

    pub fn reindex(&mut self) {
        self.index = self
            .tensors
            .iter()
            .enumerate()
            .map(|(i, t)| (t.name.clone(), i))
            .collect();
    }

    pub fn id(&self, name: &str) -> Result<usize> {
        self.index
            .get(name)
            .copied()
            .ok_or_else(|| Error::Checkpoint(format!("missing parameter `{name}`")))
    }

    pub fn tensor(&self, id: usize) -> &ParamTensor {
        &self.tensors[id]
    }

    pub fn count(&self) -> usize {
        self.tensors.iter().map(|t| t.data.len()).sum()
    }

    /// Zeroes the final residual projection.
    pub fn zero_residual(&mut self) {
        for name in self.cfg.residual_head() {
            if let Some(&i) = self.index.get(&name) {
                self.tensors[i].data.iter_mut().for_each(|v| *v = 0.0);
            }
        }
    }

    /// Overwrites every tensor with uniform values in `[-amp, amp]`.
    pub fn randomize(&mut self, seed: u64, amp: f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = Uniform::new_inclusive(-amp, amp).expect("valid range");
        for t in &mut self.tensors {
            t.data.iter_mut().for_each(|v| *v = d.sample(&mut rng));
        }
    }

    /// Uniform values scaled by `gain / sqrt(fan_in)` per weight tensor;
    /// biases in `[-0.1, 0.1]`. Every tensor, the head included, is drawn.
    pub fn randomize_fan_in(&mut self, seed: u64, gain: f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for t in &mut self.tensors {
            let amp = if t.shape.len() == 1 {
                0.1
            } else {
                let fan: usize = t.shape[1..].iter().product();
                gain * (3.0 / fan as f64).sqrt()
            };
            let d = Uniform::new_inclusive(-amp, amp).expect("valid range");
            t.data.iter_mut().for_each(|v| *v = d.sample(&mut rng));
        }
    }

    pub fn zeros_like(&self) -> Vec<Vec<f64>> {
        self.tensors.iter().map(|t| vec![0.0; t.data.len()]).collect()
    }

    pub fn flat(&self) -> Vec<f64> {
        self.tensors.iter().flat_map(|t| t.data.iter().cloned()).collect()
    }

    pub fn set_flat(&mut self, v: &[f64]) -> Result<()> {
        if v.len() != self.count() {
            return Err(Error::Checkpoint(format!(
                "{} values for {} parameters",
                v.len(),
                self.count()
            )));
        }
        let mut off = 0;
        for t in &mut self.tensors {
            let n = t.data.len();
            t.data.copy_from_slice(&v[off..off + n]);
            off += n;
        }
        Ok(())
    }

    /// Hash of the parameter values and fingerprint.
    pub fn content_hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.fingerprint.as_bytes());
        for t in &self.tensors {
            h.update(t.name.as_bytes());
            for v in &t.data {
                h.update(v.to_le_bytes());
            }
        }
        hex::encode(h.finalize())
    }
}
