use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sensor::{snr_db_to_linear, BandId, BandSpec, BandTable, DEFAULT_SCALE};
use crate::training::{PrepareCfg, Setting, TrainConfig, DEFAULT_OVERLAP, DEFAULT_TILE};

/// Output locations. Relative paths resolve against the config file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Paths {
    pub work_dir: PathBuf,
    pub scenes: Option<PathBuf>,
    pub cache: Option<PathBuf>,
    pub run: Option<PathBuf>,
    pub eval: Option<PathBuf>,
    pub shr: Option<PathBuf>,
    pub figures: Option<PathBuf>,
    /// Checkpoint used by evaluate, superresolve and visualize.
    pub checkpoint: Option<PathBuf>,
}

impl Default for Paths {
    fn default() -> Self {
        Paths {
            work_dir: PathBuf::from("work"),
            scenes: None,
            cache: None,
            run: None,
            eval: None,
            shr: None,
            figures: None,
            checkpoint: None,
        }
    }
}

/// Band selection plus optional overrides of the band table entry.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BandSection {
    pub id: BandId,
    /// User band table; bands it omits keep the shipped values.
    pub table: Option<PathBuf>,
    pub channels: Option<usize>,
    pub snr_linear: Option<f64>,
    /// Converted to `snr_linear` during validation.
    pub snr_db: Option<f64>,
    pub mu: Option<f64>,
    pub blur_sigma_along: Option<f64>,
    pub blur_sigma_cross: Option<f64>,
    pub scale: Option<usize>,
    pub lr_patch: Option<usize>,
}

impl Default for BandSection {
    fn default() -> Self {
        BandSection {
            id: BandId::Bd3,
            table: None,
            channels: None,
            snr_linear: None,
            snr_db: None,
            mu: None,
            blur_sigma_along: None,
            blur_sigma_cross: None,
            scale: None,
            lr_patch: None,
        }
    }
}

impl BandSection {
    pub fn resolve(&self) -> Result<BandSpec> {
        let table = match &self.table {
            Some(p) => BandTable::load(p)?,
            None => BandTable::shipped(),
        };
        let mut spec = table
            .get(self.id)
            .cloned()
            .ok_or_else(|| Error::config("band.id", format!("{} is not in the band table", self.id)))?;
        if self.snr_linear.is_some() && self.snr_db.is_some() {
            return Err(Error::config("band.snr_db", "give either snr_linear or snr_db"));
        }
        if let Some(v) = self.channels {
            spec.channels = v;
        }
        if let Some(v) = self.snr_linear {
            spec.snr_linear = v;
        }
        if let Some(v) = self.snr_db {
            spec.snr_linear = snr_db_to_linear(v);
        }
        if let Some(v) = self.mu {
            spec.mu = v;
        }
        if let Some(v) = self.blur_sigma_along {
            spec.blur_sigma_along = v;
        }
        if let Some(v) = self.blur_sigma_cross {
            spec.blur_sigma_cross = v;
        }
        if let Some(v) = self.scale {
            spec.scale = v;
        }
        if let Some(v) = self.lr_patch {
            spec.lr_patch = v;
        }
        spec.refresh_sigma();
        spec.validate().map_err(|e| Error::config("band", e.to_string()))?;
        Ok(spec)
    }

    fn materialize(&mut self) -> Result<BandSpec> {
        let spec = self.resolve()?;
        self.channels = Some(spec.channels);
        self.snr_linear = Some(spec.snr_linear);
        self.snr_db = None;
        self.mu = Some(spec.mu);
        self.blur_sigma_along = Some(spec.blur_sigma_along);
        self.blur_sigma_cross = Some(spec.blur_sigma_cross);
        self.scale = Some(spec.scale);
        self.lr_patch = Some(spec.lr_patch);
        Ok(spec)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SceneFormat {
    Npy,
    L1b,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthCfg {
    pub count: usize,
    pub rows: usize,
    pub cols: usize,
    pub smoothness: f64,
    pub spectral_rank: usize,
    pub seed: u64,
    pub format: SceneFormat,
}

impl Default for SynthCfg {
    fn default() -> Self {
        SynthCfg {
            count: 20,
            rows: 448,
            cols: 448,
            smoothness: 1.0,
            spectral_rank: 4,
            seed: 0,
            format: SceneFormat::Npy,
        }
    }
}

/// Which measurement the model is applied to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Simulated LR input, native patch as reference.
    LrHr,
    /// Native patch as input, no reference.
    GtShr,
}

impl Mode {
    pub fn for_setting(s: Setting) -> Mode {
        match s {
            Setting::SslGtShr => Mode::GtShr,
            _ => Mode::LrHr,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InferenceCfg {
    /// Derived from `train.setting` when unset.
    pub mode: Option<Mode>,
    /// Model label in reports; the training setting when unset.
    pub label: Option<String>,
    pub tile: usize,
    pub overlap: usize,
    /// Raw scene to super-resolve instead of test patches.
    pub input: Option<PathBuf>,
    /// Test patches processed by superresolve.
    pub limit: usize,
    /// Position within the test split drawn by visualize.
    pub patch: usize,
}

impl Default for InferenceCfg {
    fn default() -> Self {
        InferenceCfg {
            mode: None,
            label: None,
            tile: DEFAULT_TILE,
            overlap: DEFAULT_OVERLAP,
            input: None,
            limit: 1,
            patch: 0,
        }
    }
}

/// Everything a command needs, in one strict schema.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub paths: Paths,
    pub band: BandSection,
    pub synth: SynthCfg,
    pub data: PrepareCfg,
    pub train: TrainConfig,
    pub inference: InferenceCfg,
}

/// Origin of each default value, by dotted key prefix.
pub const DEFAULT_BASIS: &[(&str, &str)] = &[
    ("band.", "shipped band table"),
    ("band.scale", "published scale factor"),
    ("data.threshold", "published cleaning threshold"),
    ("data.fractions", "published image-level split"),
    ("data.polar_fraction", "project convention: polar discard fraction"),
    ("train.lr0", "published initial learning rate"),
    ("train.eq.lambda", "published equivariance weight"),
    ("train.eq.factor", "project convention: fixed zoom factor"),
    ("train.plateau_", "project convention: plateau schedule"),
    ("train.plateau_factor", "published plateau schedule"),
    ("train.plateau_patience", "published plateau schedule"),
    ("train.batch_size", "published batch size"),
    ("train.min_lr", "project convention: plateau schedule"),
    ("train.max_epochs", "project convention: epoch budget"),
    ("train.sure.", "project convention: Monte Carlo divergence"),
    ("inference.", "project convention: tiled inference"),
];

fn basis_of(key: &str) -> &'static str {
    DEFAULT_BASIS
        .iter()
        .filter(|(p, _)| key.starts_with(p))
        .max_by_key(|(p, _)| p.len())
        .map(|(_, b)| *b)
        .unwrap_or("project convention")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub value: toml::Value,
    /// `file`, `override` or `default`.
    pub source: String,
    pub basis: Option<String>,
}

/// Normalized config together with where each leaf came from.
#[derive(Clone, Debug)]
pub struct Validated {
    pub config: RunConfig,
    pub spec: BandSpec,
    pub provenance: BTreeMap<String, Provenance>,
}

fn parse_value(raw: &str) -> toml::Value {
    format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

/// Applies `key=value` with a dotted key; the value is read as TOML and
/// falls back to a bare string.
pub fn apply_override(table: &mut toml::Table, spec: &str) -> Result<()> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| Error::config(spec, "override must look like key=value"))?;
    let parts: Vec<&str> = key.trim().split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::config(key, "empty key segment"));
    }
    let mut t = table;
    for p in &parts[..parts.len() - 1] {
        let entry = t
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        t = entry
            .as_table_mut()
            .ok_or_else(|| Error::config(key, format!("`{p}` is not a table")))?;
    }
    t.insert(parts[parts.len() - 1].to_string(), parse_value(raw.trim()));
    Ok(())
}

fn leaves(prefix: &str, v: &toml::Value, out: &mut BTreeMap<String, toml::Value>) {
    match v {
        toml::Value::Table(t) => {
            for (k, v) in t {
                let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                leaves(&key, v, out);
            }
        }
        other => {
            out.insert(prefix.to_string(), other.clone());
        }
    }
}

fn has_key(t: &toml::Table, key: &str) -> bool {
    let mut cur = t;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, p) in parts.iter().enumerate() {
        match cur.get(*p) {
            None => return false,
            Some(toml::Value::Table(next)) if i + 1 < parts.len() => cur = next,
            Some(_) => return true,
        }
    }
    true
}

fn resolve_path(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

/// Parses TOML text strictly; errors carry the offending field path.
pub fn parse_config(table: toml::Table) -> Result<RunConfig> {
    serde_path_to_error::deserialize(toml::Value::Table(table)).map_err(|e| {
        let path = e.path().to_string();
        Error::config(path, e.into_inner().to_string())
    })
}

impl RunConfig {
    /// Fills every derived default and checks all sections.
    pub fn normalize(mut self, base: &Path) -> Result<(RunConfig, BandSpec)> {
        let spec = self.band.materialize()?;
        if spec.scale != DEFAULT_SCALE {
            log::warn!("band scale {} differs from the default {DEFAULT_SCALE}", spec.scale);
        }
        self.data.validate()?;
        self.train.band_id = self.band.id;
        self.train.validate()?;
        let s = &self.synth;
        if s.count == 0 || s.rows == 0 || s.cols == 0 {
            return Err(Error::config("synth", "count, rows and cols must be positive"));
        }
        if s.spectral_rank == 0 || s.spectral_rank > spec.channels {
            return Err(Error::config(
                "synth.spectral_rank",
                format!("must lie in 1..={}", spec.channels),
            ));
        }
        if !(s.smoothness > 0.0) {
            return Err(Error::config("synth.smoothness", "must be positive"));
        }
        let inf = &mut self.inference;
        if inf.tile == 0 || inf.overlap % 2 != 0 {
            return Err(Error::config("inference", "tile must be positive and overlap even"));
        }
        inf.mode.get_or_insert(Mode::for_setting(self.train.setting));
        inf.label.get_or_insert_with(|| self.train.setting.to_string());
        if let Some(p) = &inf.input {
            inf.input = Some(resolve_path(base, p));
        }
        if let Some(t) = &self.band.table {
            self.band.table = Some(resolve_path(base, t));
        }
        let p = &mut self.paths;
        p.work_dir = resolve_path(base, &p.work_dir);
        let w = p.work_dir.clone();
        let fill = |v: &mut Option<PathBuf>, rel: String| {
            *v = Some(match v.take() {
                Some(x) => resolve_path(base, &x),
                None => w.join(rel),
            });
        };
        fill(&mut p.scenes, "scenes".into());
        fill(&mut p.cache, "cache".into());
        fill(&mut p.run, format!("runs/{}", self.train.setting));
        let run = p.run.clone().expect("filled");
        fill(&mut p.eval, "eval".into());
        fill(&mut p.shr, "shr".into());
        fill(&mut p.figures, "figures".into());
        p.checkpoint = Some(match p.checkpoint.take() {
            Some(x) => resolve_path(base, &x),
            None => run.join("checkpoints/best.ckpt"),
        });
        Ok((self, spec))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("run config serializes")
    }

    /// Path field filled by `normalize`.
    pub fn path(&self, v: &Option<PathBuf>, name: &str) -> Result<PathBuf> {
        v.clone().ok_or_else(|| Error::config(format!("paths.{name}"), "unset; normalize first"))
    }
}

/// Reads, overrides, parses and normalizes a config file.
pub fn validate_config(path: &Path, overrides: &[String]) -> Result<Validated> {
    if !path.exists() {
        return Err(Error::MissingArtifact(path.to_path_buf()));
    }
    let text = std::fs::read_to_string(path)?;
    let file: toml::Table = text
        .parse()
        .map_err(|e: toml::de::Error| Error::config(path.display().to_string(), e.to_string()))?;
    let mut table = file.clone();
    let mut over = toml::Table::new();
    for o in overrides {
        apply_override(&mut table, o)?;
        apply_override(&mut over, o)?;
    }
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let base = if base.as_os_str().is_empty() { PathBuf::from(".") } else { base };
    let (config, spec) = parse_config(table)?.normalize(&base)?;
    let full = toml::Value::try_from(&config).map_err(|e| Error::config("", e.to_string()))?;
    let mut all = BTreeMap::new();
    leaves("", &full, &mut all);
    let provenance = all
        .into_iter()
        .map(|(k, value)| {
            let (source, basis) = if has_key(&over, &k) {
                ("override", None)
            } else if has_key(&file, &k) {
                ("file", None)
            } else {
                ("default", Some(basis_of(&k).to_string()))
            };
            (k, Provenance { value, source: source.into(), basis })
        })
        .collect();
    Ok(Validated { config, spec, provenance })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(text: &str) -> (tempfile::TempDir, PathBuf) {
        let d = tempfile::tempdir().unwrap();
        let p = d.path().join("run.toml");
        std::fs::write(&p, text).unwrap();
        (d, p)
    }

    #[test]
    fn empty_file_materializes_band_table() {
        let (_d, p) = write("");
        let v = validate_config(&p, &[]).unwrap();
        assert_eq!(v.spec, BandSpec::default_for(BandId::Bd3));
        assert_eq!(v.config.band.snr_linear, Some(v.spec.snr_linear));
        assert_eq!(v.config.band.scale, Some(4));
        assert_eq!(v.config.train.eq.as_ref().unwrap().lambda, 1.0);
        assert_eq!(v.config.train.lr0, 1e-3);
        assert_eq!(v.config.data.threshold, 1e-2);
        assert_eq!(v.config.data.fractions, (0.65, 0.20, 0.15));
        let lam = &v.provenance["train.eq.lambda"];
        assert_eq!(lam.source, "default");
        assert_eq!(lam.basis.as_deref(), Some("published equivariance weight"));
        assert_eq!(v.provenance["band.mu"].basis.as_deref(), Some("shipped band table"));
    }

    #[test]
    fn every_band_materializes() {
        for b in BandId::ALL {
            let (_d, p) = write(&format!("[band]\nid = \"{b}\"\n"));
            let v = validate_config(&p, &[]).unwrap();
            assert_eq!(v.spec, BandSpec::default_for(b));
        }
    }

    #[test]
    fn negative_threshold_is_rejected() {
        let (_d, p) = write("[data]\nthreshold = -1.0\n");
        match validate_config(&p, &[]) {
            Err(Error::Config { path, .. }) => assert_eq!(path, "data.threshold"),
            other => panic!("expected a config error, got {other:?}"),
        }
    }

    #[test]
    fn unknown_keys_report_their_path() {
        let (_d, p) = write("[train.eq]\nlambda = 1.0\nlamda = 2.0\n");
        match validate_config(&p, &[]) {
            Err(Error::Config { path, message }) => {
                assert!(path.starts_with("train.eq"), "{path}");
                assert!(message.contains("lamda"), "{message}");
            }
            other => panic!("expected a config error, got {other:?}"),
        }
        let (_d, p) = write("");
        assert!(validate_config(&p, &["train.nope=1".into()]).is_err());
    }

    #[test]
    fn overrides_win_and_are_tracked() {
        let (_d, p) = write("[train]\nlr0 = 0.01\n");
        let v = validate_config(
            &p,
            &["train.eq.lambda=0.5".into(), "band.id=BD7".into(), "train.setting=ssl_gt_shr".into()],
        )
        .unwrap();
        assert_eq!(v.config.train.lr0, 0.01);
        assert_eq!(v.config.train.eq.as_ref().unwrap().lambda, 0.5);
        assert_eq!(v.config.train.band_id, BandId::Bd7);
        assert_eq!(v.config.inference.mode, Some(Mode::GtShr));
        assert_eq!(v.provenance["train.lr0"].source, "file");
        assert_eq!(v.provenance["train.eq.lambda"].source, "override");
        assert!(v.config.paths.run.as_ref().unwrap().ends_with("runs/ssl_gt_shr"));
    }

    #[test]
    fn snr_in_decibels() {
        let (_d, p) = write("[band]\nsnr_db = 20.0\n");
        let v = validate_config(&p, &[]).unwrap();
        assert!((v.spec.snr_linear - 100.0).abs() < 1e-9);
        assert_eq!(v.spec.sigma, v.spec.mu / v.spec.snr_linear);
    }

    #[test]
    fn normalized_config_round_trips() {
        let (_d, p) = write("[band]\nchannels = 8\n");
        let v = validate_config(&p, &[]).unwrap();
        let again = parse_config(v.config.to_toml().parse().unwrap()).unwrap();
        assert_eq!(again, v.config);
    }
}
