use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use log::{info, warn};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::array::Array3;
use crate::error::{Error, Result};
use crate::hsio::{npy, Split};
use crate::losses::{sse_grad, ssl_objective, SslTerms, SureCfg};
use crate::models::{ModelCfg, ModelParams};
use crate::sensor::{add_noise_per_channel, BandSpec, BlurKernel, Degradation, HyperCube, Space, DEFAULT_TRUNCATION};
use crate::training::{patch_seed, Adam, CachedDataset, Checkpoint, Plateau, Setting, TrainConfig};

/// One line of `history.jsonl`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub val_loss: f64,
    /// Mean training-term breakdown; zero for the supervised setting.
    pub terms: SslTerms,
    pub steps: usize,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub run_dir: PathBuf,
    pub best: Checkpoint,
    pub last: Checkpoint,
    pub history: Vec<EpochRecord>,
}

/// A training or validation sample.
struct Sample {
    id: usize,
    y: Array3,
    target: Option<Array3>,
}

fn mix(a: u64, b: u64, c: u64) -> u64 {
    patch_seed(patch_seed(a, b as usize), c as usize)
}

fn centre_crop(a: &Array3, size: usize) -> Result<Array3> {
    if size > a.rows() || size > a.cols() {
        return Err(Error::config(
            "train.diagnostics.patch_size",
            format!("{size} exceeds the {}x{} patch", a.rows(), a.cols()),
        ));
    }
    a.crop((a.rows() - size) / 2, (a.cols() - size) / 2, size, size)
}

/// Measurement-space operator and noise levels used by the losses.
struct Physics {
    a: Degradation,
    sigma: Vec<f64>,
    /// Extra per-channel std added to every measurement.
    extra: Option<Vec<f64>>,
}

fn physics(cfg: &TrainConfig, data: &CachedDataset) -> Result<Physics> {
    let spec = &data.info.spec;
    let a = match cfg.diagnostics.operator_band {
        Some(b) => {
            let other = BandSpec::default_for(b);
            Degradation::new(
                BlurKernel::new(other.blur_sigma_along, other.blur_sigma_cross, DEFAULT_TRUNCATION)?,
                spec.scale,
            )?
        }
        None => data.degradation()?,
    };
    let (sigma, extra) = match cfg.diagnostics.match_snr_band {
        Some(b) => {
            let target = BandSpec::default_for(b).sigma;
            let own = data.info.sigma_raw;
            let add = (target * target - own * own).max(0.0).sqrt();
            if add == 0.0 {
                warn!("{b} noise is not above the data noise; no extra noise added");
            }
            let eff = own.max(target);
            (data.stats.normalized_sigma(eff), Some(data.stats.normalized_sigma(add)))
        }
        None => (data.info.sigma.clone(), None),
    };
    Ok(Physics { a, sigma, extra })
}

fn samples(cfg: &TrainConfig, data: &CachedDataset, split: Split, ph: &Physics) -> Result<Vec<Sample>> {
    let s = data.info.spec.scale;
    let mut out = Vec::new();
    for e in data.split(split) {
        match cfg.setting {
            Setting::SlLrHr | Setting::SslLrHr => {
                let mut y = e
                    .lr
                    .clone()
                    .ok_or_else(|| Error::Contract(format!("patch {} has no simulated measurement", e.index)))?;
                let mut target = if cfg.setting == Setting::SlLrHr {
                    Some(e.gt.clone().ok_or_else(|| {
                        Error::Contract(format!("supervised training needs the native patch {}", e.index))
                    })?)
                } else {
                    None
                };
                if let Some(p) = cfg.diagnostics.patch_size {
                    y = centre_crop(&y, p)?;
                    target = target.map(|t| centre_crop(&t, p * s)).transpose()?;
                }
                if let Some(extra) = &ph.extra {
                    let cube = HyperCube::new(y, data.info.spec.band_id, Space::Normalized)?;
                    y = add_noise_per_channel(&cube, extra, mix(data.manifest.lr_seed, 1, e.index as u64))?.data;
                }
                out.push(Sample { id: e.index, y, target });
            }
            Setting::SslGtShr => {
                let gt = e
                    .gt
                    .as_ref()
                    .ok_or_else(|| Error::Contract(format!("patch {} has no native data", e.index)))?;
                let t = cfg.diagnostics.patch_size.unwrap_or(data.info.spec.lr_patch);
                if t > gt.rows() || t > gt.cols() {
                    return Err(Error::config("train.diagnostics.patch_size", format!("{t} exceeds the native patch")));
                }
                for (k, (r, c)) in (0..gt.rows() / t)
                    .flat_map(|r| (0..gt.cols() / t).map(move |c| (r, c)))
                    .enumerate()
                {
                    out.push(Sample {
                        id: e.index * 4096 + k,
                        y: gt.crop(r * t, c * t, t, t)?,
                        target: None,
                    });
                }
            }
        }
    }
    Ok(out)
}

pub(crate) fn model_cfg(cfg: &TrainConfig, channels: usize) -> Result<ModelCfg> {
    if cfg.toy {
        Ok(ModelCfg::toy(cfg.architecture, channels))
    } else {
        ModelCfg::preset(cfg.architecture, channels)
    }
}

/// Loss and optional gradients of one sample.
fn evaluate(
    cfg: &TrainConfig,
    params: &ModelParams,
    s: &Sample,
    ph: &Physics,
    sure: &SureCfg,
    seed: u64,
    want_grad: bool,
) -> Result<(f64, SslTerms, Option<Vec<Vec<f64>>>)> {
    let e = match cfg.setting {
        Setting::SlLrHr => sse_grad(params, &s.y, s.target.as_ref().expect("supervised target"), want_grad)?,
        _ => ssl_objective(params, &s.y, &ph.a, sure, cfg.eq.as_ref(), seed, None, want_grad)?,
    };
    Ok((e.terms.total, e.terms, e.grads))
}

fn dump_batch(run_dir: &Path, epoch: usize, s: &Sample, err: &Error) -> Error {
    let path = run_dir.join(format!("nonfinite_epoch{epoch}_sample{}.npy", s.id));
    match npy::write_f32(&path, &s.y) {
        Ok(()) => Error::Numeric(format!("{err} (sample {} written to {})", s.id, path.display())),
        Err(e) => Error::Numeric(format!("{err} (sample {} could not be written: {e})", s.id)),
    }
}

fn add_terms(acc: &mut SslTerms, t: &SslTerms) {
    acc.sure_fidelity += t.sure_fidelity;
    acc.sure_penalty += t.sure_penalty;
    acc.divergence += t.divergence;
    acc.eq += t.eq;
    acc.total += t.total;
}

fn scale_terms(t: &mut SslTerms, k: f64) {
    t.sure_fidelity *= k;
    t.sure_penalty *= k;
    t.divergence *= k;
    t.eq *= k;
    t.total *= k;
}

/// Trains one model on `data` and writes `run_dir`.
pub fn train_band(cfg: &TrainConfig, data: &CachedDataset, run_dir: &Path) -> Result<TrainOutcome> {
    train_band_from(cfg, data, run_dir, None)
}

/// As `train_band`, continuing from `resume` when given.
pub fn train_band_from(
    cfg: &TrainConfig,
    data: &CachedDataset,
    run_dir: &Path,
    resume: Option<Checkpoint>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if cfg.band_id != data.info.spec.band_id {
        return Err(Error::Contract(format!(
            "config trains {} but the dataset holds {}",
            cfg.band_id, data.info.spec.band_id
        )));
    }
    let ph = physics(cfg, data)?;
    let train = samples(cfg, data, Split::Train, &ph)?;
    let mut val = samples(cfg, data, Split::Val, &ph)?;
    if train.is_empty() {
        return Err(Error::Contract("the training split is empty".into()));
    }
    if val.is_empty() {
        warn!("validation split is empty; scheduling on the training loss");
    }
    if let Some(n) = cfg.val_limit {
        val.truncate(n);
    }
    let sure = cfg.sure.to_cfg(&ph.sigma);
    let fingerprint = cfg.fingerprint();
    fs::create_dir_all(run_dir.join("checkpoints"))?;
    fs::write(run_dir.join("config.json"), serde_json::to_string_pretty(cfg)?)?;
    fs::write(
        run_dir.join("inputs.json"),
        serde_json::to_string_pretty(&serde_json::json!({
            "manifest_hash": data.manifest.hash(),
            "cache_hash": data.hash,
            "cache_dir": data.dir,
        }))?,
    )?;

    let mut ck = match resume {
        Some(c) => {
            if c.config_fingerprint != fingerprint || c.manifest_hash != data.manifest.hash() {
                return Err(Error::Checkpoint("checkpoint was written for another config or dataset".into()));
            }
            c
        }
        None => {
            let mut params = ModelParams::init(
                cfg.architecture,
                cfg.band_id,
                model_cfg(cfg, data.channels())?,
                data.info.spec.scale,
                cfg.seed,
            )?;
            params.zero_residual();
            let shapes: Vec<usize> = params.tensors.iter().map(|t| t.data.len()).collect();
            Checkpoint {
                params,
                adam: Adam::new(&shapes),
                plateau: Plateau::new(cfg.lr0, cfg.plateau_factor, cfg.plateau_patience, cfg.plateau_threshold, cfg.min_lr)?,
                epoch: 0,
                best_val: f64::INFINITY,
                manifest_hash: data.manifest.hash(),
                config_fingerprint: fingerprint,
            }
        }
    };
    let history_path = run_dir.join("history.jsonl");
    let mut history: Vec<EpochRecord> = if ck.epoch > 0 && history_path.exists() {
        fs::read_to_string(&history_path)?
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(serde_json::from_str)
            .collect::<std::result::Result<Vec<_>, _>>()?
            .into_iter()
            .filter(|r: &EpochRecord| r.epoch <= ck.epoch)
            .collect()
    } else {
        Vec::new()
    };
    let mut f = fs::File::create(&history_path)?;
    for r in &history {
        writeln!(f, "{}", serde_json::to_string(r)?)?;
    }
    drop(f);
    let mut best = if ck.epoch > 0 && run_dir.join("checkpoints/best.ckpt").exists() {
        Checkpoint::load(&run_dir.join("checkpoints/best.ckpt"))?
    } else {
        ck.clone()
    };

    while ck.epoch < cfg.max_epochs && !ck.plateau.exhausted() {
        let epoch = ck.epoch + 1;
        let lr = ck.plateau.lr;
        let mut order: Vec<usize> = (0..train.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(mix(cfg.seed, 2, epoch as u64)));
        if let Some(n) = cfg.steps_per_epoch {
            order.truncate(n * cfg.batch_size);
        }
        let mut train_loss = 0.0;
        let mut terms = SslTerms::default();
        let mut steps = 0;
        for batch in order.chunks(cfg.batch_size) {
            let mut acc = ck.params.zeros_like();
            for &i in batch {
                let s = &train[i];
                let seed = mix(cfg.seed, 3, (epoch as u64) << 32 | s.id as u64);
                let (loss, t, g) = evaluate(cfg, &ck.params, s, &ph, &sure, seed, true)
                    .map_err(|e| dump_batch(run_dir, epoch, s, &e))?;
                if !loss.is_finite() {
                    return Err(dump_batch(run_dir, epoch, s, &Error::Numeric("non-finite loss".into())));
                }
                train_loss += loss;
                add_terms(&mut terms, &t);
                for (a, gi) in acc.iter_mut().zip(g.expect("gradients requested")) {
                    a.iter_mut().zip(gi).for_each(|(x, y)| *x += y);
                }
            }
            let k = 1.0 / batch.len() as f64;
            acc.iter_mut().flatten().for_each(|v| *v *= k);
            ck.adam.update(ck.params.tensors.iter_mut().map(|t| &mut t.data), &acc, lr)?;
            steps += 1;
        }
        let n = order.len() as f64;
        train_loss /= n;
        scale_terms(&mut terms, 1.0 / n);
        let val_loss = if val.is_empty() {
            train_loss
        } else {
            let mut v = 0.0;
            for s in &val {
                v += evaluate(cfg, &ck.params, s, &ph, &sure, mix(cfg.seed, 4, s.id as u64), false)?.0;
            }
            v / val.len() as f64
        };
        if !val_loss.is_finite() {
            return Err(Error::Numeric(format!("non-finite validation loss at epoch {epoch}")));
        }
        let improved = ck.plateau.observe(val_loss);
        ck.epoch = epoch;
        if improved {
            ck.best_val = val_loss;
        }
        let rec = EpochRecord {
            epoch,
            lr,
            train_loss,
            val_loss,
            terms,
            steps,
        };
        info!(
            "epoch {epoch}: lr {lr:.1e} train {train_loss:.6e} val {val_loss:.6e}{}",
            if improved { " *" } else { "" }
        );
        let mut f = fs::OpenOptions::new().create(true).append(true).open(&history_path)?;
        writeln!(f, "{}", serde_json::to_string(&rec)?)?;
        history.push(rec);
        ck.save(&run_dir.join("checkpoints/last.ckpt"))?;
        if improved {
            best = ck.clone();
            best.save(&run_dir.join("checkpoints/best.ckpt"))?;
        }
    }
    if !run_dir.join("checkpoints/best.ckpt").exists() {
        best.save(&run_dir.join("checkpoints/best.ckpt"))?;
    }
    Ok(TrainOutcome {
        run_dir: run_dir.to_path_buf(),
        best,
        last: ck,
        history,
    })
}
