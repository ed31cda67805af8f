//! Frozen simulated datasets: normalized native patches with their
//! degraded, noisy counterparts, written once and verified on reuse.

use std::fs;
use std::path::{Path, PathBuf};

use log::info;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::array::Array3;
use crate::error::{Error, Result};
use crate::hsio::{
    clean, compute_train_stats, crop_and_patch, discard_polar, normalize, npy, split_scanlines, ChannelStats,
    DatasetManifest, Direction, PatchCoord, Split, DEFAULT_ALONG_CROP, DEFAULT_POLAR_FRACTION, DEFAULT_THRESHOLD,
};
use crate::sensor::{add_noise_per_channel, BandSpec, Degradation, HyperCube, Space};

const HASH_FILE: &str = "cache.sha256";
/// Run-config copies stored next to the cache; not part of its hash.
const SIDECARS: [&str; 2] = ["run_config.toml", "config_provenance.json"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PrepareCfg {
    pub threshold: f64,
    pub polar_fraction: f64,
    pub along_crop: usize,
    /// Native patch side; the band's `lr_patch * scale` when unset.
    pub patch: Option<usize>,
    pub fractions: (f64, f64, f64),
    pub split_seed: u64,
    /// Raw-space noise std replacing the band value.
    pub noise_sigma: Option<f64>,
}

impl Default for PrepareCfg {
    fn default() -> Self {
        PrepareCfg {
            threshold: DEFAULT_THRESHOLD,
            polar_fraction: DEFAULT_POLAR_FRACTION,
            along_crop: DEFAULT_ALONG_CROP,
            patch: None,
            fractions: (0.65, 0.20, 0.15),
            split_seed: 0,
            noise_sigma: None,
        }
    }
}

impl PrepareCfg {
    pub fn validate(&self) -> Result<()> {
        if !(self.threshold > 0.0 && self.threshold.is_finite()) {
            return Err(Error::config("data.threshold", "must be positive"));
        }
        if let Some(s) = self.noise_sigma {
            if !(s >= 0.0 && s.is_finite()) {
                return Err(Error::config("data.noise_sigma", "must be nonnegative"));
            }
        }
        if self.patch == Some(0) || self.along_crop == 0 {
            return Err(Error::config("data", "crop and patch sizes must be positive"));
        }
        Ok(())
    }

    pub fn patch_for(&self, spec: &BandSpec) -> usize {
        self.patch.unwrap_or_else(|| spec.hr_patch())
    }
}

/// Simulation settings stored next to the arrays.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimInfo {
    pub spec: BandSpec,
    pub manifest_hash: String,
    /// Raw-space noise std actually applied.
    pub sigma_raw: f64,
    /// The same std per normalized channel.
    pub sigma: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Entry {
    pub index: usize,
    pub image_id: String,
    pub split: Split,
    /// Normalized native-resolution patch.
    pub gt: Option<Array3>,
    /// Degraded noisy counterpart of `gt`.
    pub lr: Option<Array3>,
}

#[derive(Clone, Debug)]
pub struct CachedDataset {
    pub dir: PathBuf,
    pub manifest: DatasetManifest,
    pub stats: ChannelStats,
    pub info: SimInfo,
    pub entries: Vec<Entry>,
    pub hash: String,
}

fn patch_path(dir: &Path, idx: usize, kind: &str) -> PathBuf {
    dir.join("patches").join(format!("{idx:05}_{kind}.npy"))
}

/// Per-patch noise seed.
pub fn patch_seed(lr_seed: u64, idx: usize) -> u64 {
    let mut z = lr_seed ^ (idx as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// SHA-256 over every cache file except the hash file and config copies,
/// in path order.
pub fn hash_dir(dir: &Path) -> Result<String> {
    let mut files = Vec::new();
    collect(dir, dir, &mut files)?;
    files.sort();
    let mut h = Sha256::new();
    for rel in files {
        h.update(rel.as_bytes());
        h.update([0]);
        h.update(fs::read(dir.join(&rel))?);
    }
    Ok(hex::encode(h.finalize()))
}

fn collect(root: &Path, dir: &Path, out: &mut Vec<String>) -> Result<()> {
    for e in fs::read_dir(dir)? {
        let p = e?.path();
        if p.is_dir() {
            collect(root, &p, out)?;
        } else {
            let rel = p.strip_prefix(root).expect("under root").to_string_lossy().replace('\\', "/");
            if rel != HASH_FILE && !SIDECARS.contains(&rel.as_str()) && !rel.ends_with(".tmp") {
                out.push(rel);
            }
        }
    }
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, v: &T) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(v)?)?;
    Ok(())
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    if !path.exists() {
        return Err(Error::MissingArtifact(path.to_path_buf()));
    }
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

/// Degrades and perturbs every patch once and writes the cache. When `dir`
/// already holds a cache, its hash and settings are verified instead and
/// any difference is refused.
pub fn simulate_lr_dataset(
    manifest: &DatasetManifest,
    spec: &BandSpec,
    stats: &ChannelStats,
    gt: &[Array3],
    sigma_raw: f64,
    dir: &Path,
) -> Result<CachedDataset> {
    if gt.len() != manifest.patches.len() {
        return Err(Error::Contract(format!(
            "{} patches for {} manifest entries",
            gt.len(),
            manifest.patches.len()
        )));
    }
    spec.validate()?;
    let info = SimInfo {
        spec: spec.clone(),
        manifest_hash: manifest.hash(),
        sigma_raw,
        sigma: stats.normalized_sigma(sigma_raw),
    };
    if dir.join(HASH_FILE).exists() {
        let found: SimInfo = read_json(&dir.join("sim.json"))?;
        if found != info {
            return Err(Error::CacheMismatch {
                dir: dir.to_path_buf(),
                expected: serde_json::to_string(&info)?,
                found: serde_json::to_string(&found)?,
            });
        }
        let ds = CachedDataset::open(dir)?;
        info!("verified existing cache {} ({})", dir.display(), ds.hash);
        return Ok(ds);
    }
    fs::create_dir_all(dir.join("patches"))?;
    let a = Degradation::from_spec(spec)?;
    for (idx, x) in gt.iter().enumerate() {
        let x = x.quantize_f32();
        let cube = HyperCube::new(a.apply(&x)?, spec.band_id, Space::Normalized)?;
        let y = add_noise_per_channel(&cube, &info.sigma, patch_seed(manifest.lr_seed, idx))?;
        npy::write_f32(&patch_path(dir, idx, "gt"), &x)?;
        npy::write_f32(&patch_path(dir, idx, "lr"), &y.data)?;
    }
    manifest.save(&dir.join("manifest.json"))?;
    write_json(&dir.join("stats.json"), stats)?;
    write_json(&dir.join("sim.json"), &info)?;
    let hash = hash_dir(dir)?;
    fs::write(dir.join(HASH_FILE), &hash)?;
    info!("wrote {} patches to {} ({hash})", gt.len(), dir.display());
    CachedDataset::open(dir)
}

/// Cleans, splits, normalizes and patches raw scenes, then simulates.
pub fn prepare_dataset(
    scenes: &[(String, HyperCube)],
    spec: &BandSpec,
    cfg: &PrepareCfg,
    dir: &Path,
) -> Result<CachedDataset> {
    cfg.validate()?;
    let mut cleaned = Vec::with_capacity(scenes.len());
    for (id, s) in scenes {
        if s.band_id != spec.band_id || s.channels() != spec.channels {
            return Err(Error::Contract(format!(
                "scene `{id}` is {} with {} channels; expected {} with {}",
                s.band_id,
                s.channels(),
                spec.band_id,
                spec.channels
            )));
        }
        cleaned.push((id.clone(), discard_polar(&clean(s, cfg.threshold)?, cfg.polar_fraction)?));
    }
    let ids: Vec<String> = cleaned.iter().map(|(id, _)| id.clone()).collect();
    let mut manifest = split_scanlines(&ids, cfg.fractions, cfg.split_seed)?;
    let train: Vec<(&str, &HyperCube)> = cleaned
        .iter()
        .filter(|(id, _)| manifest.split_of(id) == Some(Split::Train))
        .map(|(id, c)| (id.as_str(), c))
        .collect();
    let stats = compute_train_stats(&manifest, &train)?;
    let patch = cfg.patch_for(spec);
    if patch % spec.scale != 0 {
        return Err(Error::config("data.patch", format!("{patch} is not a multiple of the scale {}", spec.scale)));
    }
    let mut gt = Vec::new();
    for (id, c) in &cleaned {
        let n = normalize(c, &stats, Direction::Forward)?;
        for p in crop_and_patch(&n, cfg.along_crop, patch)? {
            manifest.patches.push(PatchCoord {
                image_id: id.clone(),
                row: p.row,
                col: p.col,
                size: p.size,
            });
            gt.push(p.cube.data);
        }
    }
    if gt.is_empty() {
        return Err(Error::config("data", "no patches fit the crop and patch sizes"));
    }
    simulate_lr_dataset(&manifest, spec, &stats, &gt, cfg.noise_sigma.unwrap_or(spec.sigma), dir)
}

impl CachedDataset {
    /// Loads a cache after checking its recorded hash.
    pub fn open(dir: &Path) -> Result<CachedDataset> {
        let hash_path = dir.join(HASH_FILE);
        if !hash_path.exists() {
            return Err(Error::MissingArtifact(hash_path));
        }
        let expected = fs::read_to_string(&hash_path)?.trim().to_string();
        let found = hash_dir(dir)?;
        if expected != found {
            return Err(Error::CacheMismatch {
                dir: dir.to_path_buf(),
                expected,
                found,
            });
        }
        let manifest = DatasetManifest::load(&dir.join("manifest.json"))?;
        let stats: ChannelStats = read_json(&dir.join("stats.json"))?;
        let info: SimInfo = read_json(&dir.join("sim.json"))?;
        let mut entries = Vec::with_capacity(manifest.patches.len());
        for (index, p) in manifest.patches.iter().enumerate() {
            let split = manifest
                .split_of(&p.image_id)
                .ok_or_else(|| Error::Contract(format!("patch of unknown image `{}`", p.image_id)))?;
            entries.push(Entry {
                index,
                image_id: p.image_id.clone(),
                split,
                gt: Some(npy::read(&patch_path(dir, index, "gt"))?),
                lr: Some(npy::read(&patch_path(dir, index, "lr"))?),
            });
        }
        Ok(CachedDataset {
            dir: dir.to_path_buf(),
            manifest,
            stats,
            info,
            entries,
            hash: found,
        })
    }

    pub fn split(&self, split: Split) -> Vec<&Entry> {
        self.entries.iter().filter(|e| e.split == split).collect()
    }

    pub fn degradation(&self) -> Result<Degradation> {
        Degradation::from_spec(&self.info.spec)
    }

    pub fn channels(&self) -> usize {
        self.stats.channels()
    }

    /// Drops the native patches, keeping only simulated measurements.
    pub fn without_gt(mut self) -> CachedDataset {
        self.entries.iter_mut().for_each(|e| e.gt = None);
        self
    }

    /// Drops the simulated measurements.
    pub fn without_lr(mut self) -> CachedDataset {
        self.entries.iter_mut().for_each(|e| e.lr = None);
        self
    }
}
