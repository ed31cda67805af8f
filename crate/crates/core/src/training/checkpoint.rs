use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::models::{ArchId, ModelCfg, ModelParams};
use crate::sensor::BandId;
use crate::training::{Adam, Plateau};

const MAGIC: &str = "S5PSSR-CHECKPOINT 1";

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub params: ModelParams,
    pub adam: Adam,
    pub plateau: Plateau,
    /// Epochs completed.
    pub epoch: usize,
    pub best_val: f64,
    pub manifest_hash: String,
    pub config_fingerprint: String,
}

#[derive(Serialize, Deserialize)]
struct Header {
    arch: ArchId,
    band_id: BandId,
    cfg: ModelCfg,
    scale: usize,
    fingerprint: String,
    tensors: Vec<(String, Vec<usize>)>,
    adam: Adam,
    plateau: Plateau,
    epoch: usize,
    best_val: Option<f64>,
    manifest_hash: String,
    config_fingerprint: String,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let p = &self.params;
        let header = Header {
            arch: p.arch,
            band_id: p.band_id,
            cfg: p.cfg.clone(),
            scale: p.scale,
            fingerprint: p.fingerprint.clone(),
            tensors: p.tensors.iter().map(|t| (t.name.clone(), t.shape.clone())).collect(),
            adam: self.adam.clone(),
            plateau: self.plateau.clone(),
            epoch: self.epoch,
            best_val: self.best_val.is_finite().then_some(self.best_val),
            manifest_hash: self.manifest_hash.clone(),
            config_fingerprint: self.config_fingerprint.clone(),
        };
        let mut out = format!("{MAGIC}\n{}\n", serde_json::to_string(&header).expect("header serializes")).into_bytes();
        let blobs = p
            .tensors
            .iter()
            .map(|t| &t.data)
            .chain(self.adam.m.iter())
            .chain(self.adam.v.iter());
        for b in blobs {
            for v in b {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Checkpoint> {
        let bad = |m: &str| Error::Checkpoint(m.to_string());
        let nl1 = bytes.iter().position(|b| *b == b'\n').ok_or_else(|| bad("missing magic line"))?;
        if &bytes[..nl1] != MAGIC.as_bytes() {
            return Err(bad("not a checkpoint file"));
        }
        let rest = &bytes[nl1 + 1..];
        let nl2 = rest.iter().position(|b| *b == b'\n').ok_or_else(|| bad("missing header"))?;
        let header: Header = serde_json::from_slice(&rest[..nl2])?;
        let mut params = ModelParams::init(header.arch, header.band_id, header.cfg, header.scale, 0)?;
        if params.fingerprint != header.fingerprint {
            return Err(bad("model fingerprint does not match its configuration"));
        }
        let layout: Vec<(String, Vec<usize>)> = params.tensors.iter().map(|t| (t.name.clone(), t.shape.clone())).collect();
        if layout != header.tensors {
            return Err(bad("tensor layout does not match the architecture"));
        }
        let blob = &rest[nl2 + 1..];
        let n = params.count();
        if blob.len() != 3 * n * 8 {
            return Err(bad(&format!("expected {} data bytes, found {}", 3 * n * 8, blob.len())));
        }
        let vals: Vec<f64> = blob
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        params.set_flat(&vals[..n])?;
        let split = |mut off: usize| -> Vec<Vec<f64>> {
            params
                .tensors
                .iter()
                .map(|t| {
                    let v = vals[off..off + t.data.len()].to_vec();
                    off += t.data.len();
                    v
                })
                .collect()
        };
        let mut adam = header.adam;
        adam.m = split(n);
        adam.v = split(2 * n);
        Ok(Checkpoint {
            params,
            adam,
            plateau: header.plateau,
            epoch: header.epoch,
            best_val: header.best_val.unwrap_or(f64::INFINITY),
            manifest_hash: header.manifest_hash,
            config_fingerprint: header.config_fingerprint,
        })
    }

    /// Writes to a temporary sibling and renames it into place.
    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
        let tmp = path.with_extension("tmp");
        {
            let mut f = fs::File::create(&tmp)?;
            f.write_all(&self.to_bytes())?;
            f.sync_all()?;
        }
        fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Checkpoint> {
        if !path.exists() {
            return Err(Error::MissingArtifact(path.to_path_buf()));
        }
        Checkpoint::from_bytes(&fs::read(path)?)
    }

    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_bytes()))
    }
}
