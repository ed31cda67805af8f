//! Command runner behind the `s5p-ssr` binary.

mod config;

use std::fs;
use std::path::{Path, PathBuf};

use log::info;
use serde::{Deserialize, Serialize};

pub use config::{
    apply_override, parse_config, validate_config, BandSection, InferenceCfg, Mode, Paths, Provenance,
    RunConfig, SceneFormat, SynthCfg, Validated, DEFAULT_BASIS,
};

use crate::array::Array3;
use crate::error::{Error, Result};
use crate::hsio::{clean, load_l1b, normalize, npy, synth_scene, write_l1b_like, Direction, Split};
use crate::metrics::{
    blind_metrics, dynamic_range, pca_rgb, reference_metrics, side_by_side, write_rgb_png, ImageMetrics,
    MetricReport,
};
use crate::models::bicubic_upsample;
use crate::sensor::{BandSpec, HyperCube, Space};
use crate::training::{infer_shr_tiled, prepare_dataset, train_band, CachedDataset, Checkpoint, Entry};

/// Normalized config written into every artifact directory.
pub const CONFIG_FILE: &str = "run_config.toml";
pub const PROVENANCE_FILE: &str = "config_provenance.json";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    SynthData,
    Prepare,
    Train,
    Evaluate,
    Superresolve,
    Visualize,
}

impl Command {
    pub const ALL: [Command; 6] = [
        Command::SynthData,
        Command::Prepare,
        Command::Train,
        Command::Evaluate,
        Command::Superresolve,
        Command::Visualize,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Command::SynthData => "synth-data",
            Command::Prepare => "prepare",
            Command::Train => "train",
            Command::Evaluate => "evaluate",
            Command::Superresolve => "superresolve",
            Command::Visualize => "visualize",
        }
    }
}

impl std::str::FromStr for Command {
    type Err = Error;

    fn from_str(s: &str) -> Result<Command> {
        Command::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::config("command", format!("unknown command `{s}`")))
    }
}

impl std::fmt::Display for Command {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Scene listing written by `synth-data`, read by `prepare`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneIndex {
    pub band_id: crate::sensor::BandId,
    pub channels: usize,
    pub format: SceneFormat,
    pub ids: Vec<String>,
}

const INDEX_FILE: &str = "index.json";

fn stamp(dir: &Path, v: &Validated) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let c = dir.join(CONFIG_FILE);
    let p = dir.join(PROVENANCE_FILE);
    fs::write(&c, v.config.to_toml())?;
    fs::write(&p, serde_json::to_string_pretty(&v.provenance)?)?;
    Ok(vec![c, p])
}

fn write_json<T: Serialize>(path: &Path, v: &T) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(v)?)?;
    Ok(())
}

fn scene_path(dir: &Path, id: &str, format: SceneFormat) -> PathBuf {
    match format {
        SceneFormat::Npy => dir.join(format!("{id}.npy")),
        SceneFormat::L1b => dir.join(format!("{id}.nc")),
    }
}

/// Loads a raw cube from `.npy` or an L1B container.
pub fn load_scene(path: &Path, spec: &BandSpec) -> Result<HyperCube> {
    if !path.exists() {
        return Err(Error::MissingArtifact(path.to_path_buf()));
    }
    let cube = match path.extension().and_then(|e| e.to_str()) {
        Some("npy") => HyperCube::new(npy::read(path)?, spec.band_id, Space::Raw)?,
        _ => load_l1b(path, spec.band_id)?,
    };
    if cube.channels() != spec.channels {
        return Err(Error::Contract(format!(
            "{} has {} channels; the band config expects {}",
            path.display(),
            cube.channels(),
            spec.channels
        )));
    }
    Ok(cube)
}

fn synth_data(v: &Validated) -> Result<Vec<PathBuf>> {
    let (c, spec) = (&v.config, &v.spec);
    let dir = c.path(&c.paths.scenes, "scenes")?;
    fs::create_dir_all(&dir)?;
    let s = &c.synth;
    let mut out = Vec::new();
    let mut ids = Vec::new();
    for i in 0..s.count {
        let id = format!("scene{i:03}");
        let cube = synth_scene(
            spec.band_id,
            spec.channels,
            s.rows,
            s.cols,
            s.seed.wrapping_add(i as u64),
            s.smoothness,
            s.spectral_rank,
        )?;
        let p = scene_path(&dir, &id, s.format);
        match s.format {
            SceneFormat::Npy => npy::write_f32(&p, &cube.data)?,
            SceneFormat::L1b => write_l1b_like(&p, &cube, &[])?,
        }
        out.push(p);
        ids.push(id);
    }
    let index = dir.join(INDEX_FILE);
    write_json(
        &index,
        &SceneIndex {
            band_id: spec.band_id,
            channels: spec.channels,
            format: s.format,
            ids,
        },
    )?;
    out.push(index);
    out.extend(stamp(&dir, v)?);
    info!("wrote {} scenes to {}", s.count, dir.display());
    Ok(out)
}

fn read_index(dir: &Path) -> Result<SceneIndex> {
    let p = dir.join(INDEX_FILE);
    if !p.exists() {
        return Err(Error::MissingArtifact(p));
    }
    Ok(serde_json::from_str(&fs::read_to_string(&p)?)?)
}

fn prepare(v: &Validated) -> Result<Vec<PathBuf>> {
    let c = &v.config;
    let scenes_dir = c.path(&c.paths.scenes, "scenes")?;
    let cache = c.path(&c.paths.cache, "cache")?;
    let index = read_index(&scenes_dir)?;
    if index.band_id != v.spec.band_id {
        return Err(Error::Contract(format!(
            "scenes hold {} but the config selects {}",
            index.band_id, v.spec.band_id
        )));
    }
    let mut scenes = Vec::with_capacity(index.ids.len());
    for id in &index.ids {
        scenes.push((id.clone(), load_scene(&scene_path(&scenes_dir, id, index.format), &v.spec)?));
    }
    let existed = cache.join("cache.sha256").exists();
    let ds = prepare_dataset(&scenes, &v.spec, &c.data, &cache)?;
    let mut out = vec![cache.join("manifest.json"), cache.join("cache.sha256"), cache.join("sim.json")];
    if !existed || !cache.join(CONFIG_FILE).exists() {
        out.extend(stamp(&cache, v)?);
    }
    info!("cache {} holds {} patches ({})", cache.display(), ds.entries.len(), ds.hash);
    Ok(out)
}

fn open_cache(c: &RunConfig) -> Result<CachedDataset> {
    let dir = c.path(&c.paths.cache, "cache")?;
    if !dir.join("cache.sha256").exists() {
        return Err(Error::MissingArtifact(dir.join("cache.sha256")));
    }
    CachedDataset::open(&dir)
}

fn train(v: &Validated) -> Result<Vec<PathBuf>> {
    let c = &v.config;
    let data = open_cache(c)?;
    if data.info.spec != v.spec {
        return Err(Error::Contract("the cache was prepared with a different band config".into()));
    }
    let run = c.path(&c.paths.run, "run")?;
    let mut out = stamp(&run, v)?;
    let outcome = train_band(&c.train, &data, &run)?;
    info!(
        "trained {} epochs; best validation loss {:.6}",
        outcome.history.len(),
        outcome.best.best_val
    );
    out.extend([
        run.join("config.json"),
        run.join("inputs.json"),
        run.join("history.jsonl"),
        run.join("checkpoints/best.ckpt"),
        run.join("checkpoints/last.ckpt"),
    ]);
    Ok(out)
}

fn load_checkpoint(c: &RunConfig, data: &CachedDataset) -> Result<Checkpoint> {
    let p = c.path(&c.paths.checkpoint, "checkpoint")?;
    if !p.exists() {
        return Err(Error::MissingArtifact(p));
    }
    let ck = Checkpoint::load(&p)?;
    if ck.params.band_id != data.info.spec.band_id {
        return Err(Error::Contract(format!(
            "checkpoint is for {} but the cache holds {}",
            ck.params.band_id, data.info.spec.band_id
        )));
    }
    Ok(ck)
}

fn mode(c: &RunConfig) -> Mode {
    c.inference.mode.unwrap_or(Mode::for_setting(c.train.setting))
}

fn cube(a: &Array3, spec: &BandSpec) -> Result<HyperCube> {
    HyperCube::new(a.clone(), spec.band_id, Space::Normalized)
}

fn need<'a>(a: &'a Option<Array3>, what: &str, e: &Entry) -> Result<&'a Array3> {
    a.as_ref()
        .ok_or_else(|| Error::Contract(format!("patch {} has no {what} array", e.index)))
}

/// Measurement fed to the model for one cached patch.
fn measurement<'a>(e: &'a Entry, m: Mode) -> Result<&'a Array3> {
    match m {
        Mode::LrHr => need(&e.lr, "LR", e),
        Mode::GtShr => need(&e.gt, "native", e),
    }
}

fn evaluate(v: &Validated) -> Result<Vec<PathBuf>> {
    let c = &v.config;
    let data = open_cache(c)?;
    let ck = load_checkpoint(c, &data)?;
    let spec = &data.info.spec;
    let a = data.degradation()?;
    let m = mode(c);
    let test = data.split(Split::Test);
    if test.is_empty() {
        return Err(Error::Contract("the test split is empty".into()));
    }
    let range = match m {
        Mode::LrHr => {
            let mut r: f64 = 0.0;
            for e in &test {
                r = r.max(dynamic_range(need(&e.gt, "native", e)?));
            }
            Some(r)
        }
        Mode::GtShr => None,
    };
    let label = c.inference.label.clone().unwrap_or_else(|| c.train.setting.to_string());
    let mut report = MetricReport::new(spec.band_id, Space::Normalized, range);
    for e in &test {
        let y = cube(measurement(e, m)?, spec)?;
        let name = format!("{}#{:05}", e.image_id, e.index);
        let bic = bicubic_upsample(&y, spec.scale)?;
        let shr = infer_shr_tiled(&ck.params, &y, c.inference.tile, c.inference.overlap)?;
        for (model, xhat) in [("bicubic", &bic), (label.as_str(), &shr)] {
            let blind = blind_metrics(xhat, &y, &a)?;
            let reference = match m {
                Mode::LrHr => Some(reference_metrics(xhat, &cube(need(&e.gt, "native", e)?, spec)?, range)?),
                Mode::GtShr => None,
            };
            report.push(ImageMetrics::new(&name, model, reference.as_ref(), Some(&blind)));
        }
    }
    let dir = c.path(&c.paths.eval, "eval")?;
    let mut out = stamp(&dir, v)?;
    report.save(&dir)?;
    MetricReport::load(&dir.join("report.json"))?;
    let inputs = dir.join("inputs.json");
    write_json(
        &inputs,
        &serde_json::json!({
            "cache_hash": data.hash,
            "manifest_hash": data.manifest.hash(),
            "checkpoint": c.paths.checkpoint,
            "checkpoint_hash": ck.hash(),
            "mode": m,
        }),
    )?;
    for row in report.means() {
        info!("{}: {:?}", row.model, row.values());
    }
    out.extend([dir.join("report.tsv"), dir.join("report.json"), inputs]);
    Ok(out)
}

fn superresolve(v: &Validated) -> Result<Vec<PathBuf>> {
    let c = &v.config;
    let data = open_cache(c)?;
    let ck = load_checkpoint(c, &data)?;
    let spec = &data.info.spec;
    let a = data.degradation()?;
    let dir = c.path(&c.paths.shr, "shr")?;
    let mut out = stamp(&dir, v)?;
    let mut inputs: Vec<(String, HyperCube)> = Vec::new();
    match &c.inference.input {
        Some(p) => {
            let raw = clean(&load_scene(p, spec)?, c.data.threshold)?;
            let stem = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or("input".into());
            inputs.push((stem, normalize(&raw, &data.stats, Direction::Forward)?));
        }
        None => {
            let m = mode(c);
            for e in data.split(Split::Test).into_iter().take(c.inference.limit) {
                inputs.push((format!("patch{:05}", e.index), cube(measurement(e, m)?, spec)?));
            }
        }
    }
    if inputs.is_empty() {
        return Err(Error::Contract("nothing to super-resolve".into()));
    }
    for (stem, y) in inputs {
        let shr = infer_shr_tiled(&ck.params, &y, c.inference.tile, c.inference.overlap)?;
        let ashr = a.apply_cube(&shr)?;
        for (suffix, x) in [("shr", shr), ("a_shr", ashr)] {
            let raw = normalize(&x, &data.stats, Direction::Inverse)?;
            let p = dir.join(format!("{stem}_{suffix}.npy"));
            npy::write_f32(&p, &raw.data)?;
            out.push(p);
        }
    }
    Ok(out)
}

fn visualize(v: &Validated) -> Result<Vec<PathBuf>> {
    let c = &v.config;
    let data = open_cache(c)?;
    let ck = load_checkpoint(c, &data)?;
    let spec = &data.info.spec;
    let a = data.degradation()?;
    let m = mode(c);
    let test = data.split(Split::Test);
    let e = test.get(c.inference.patch).ok_or_else(|| {
        Error::config(
            "inference.patch",
            format!("test split has {} patches", test.len()),
        )
    })?;
    let gt = cube(need(&e.gt, "native", e)?, spec)?;
    let y = cube(measurement(e, m)?, spec)?;
    let bic = bicubic_upsample(&y, spec.scale)?;
    let shr = infer_shr_tiled(&ck.params, &y, c.inference.tile, c.inference.overlap)?;
    let ashr = a.apply_cube(&shr)?;
    let rgb = pca_rgb(&gt, &[&bic, &shr, &ashr])?;
    let dir = c.path(&c.paths.figures, "figures")?;
    let mut out = stamp(&dir, v)?;
    for (name, im) in ["gt", "bicubic", "shr", "a_shr"].iter().zip(&rgb) {
        let p = dir.join(format!("{name}.png"));
        write_rgb_png(&p, im)?;
        out.push(p);
    }
    let p = dir.join("panel.png");
    write_rgb_png(&p, &side_by_side(&rgb, 4)?)?;
    out.push(p);
    Ok(out)
}

/// Runs one command; returns the artifacts it produced, all checked to exist.
pub fn run(command: Command, config: &Path, overrides: &[String]) -> Result<Vec<PathBuf>> {
    let v = validate_config(config, overrides)?;
    info!("{command}: band {} with {} channels", v.spec.band_id, v.spec.channels);
    let out = match command {
        Command::SynthData => synth_data(&v)?,
        Command::Prepare => prepare(&v)?,
        Command::Train => train(&v)?,
        Command::Evaluate => evaluate(&v)?,
        Command::Superresolve => superresolve(&v)?,
        Command::Visualize => visualize(&v)?,
    };
    for p in &out {
        if !p.exists() {
            return Err(Error::MissingArtifact(p.clone()));
        }
    }
    Ok(out)
}
