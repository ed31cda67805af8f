use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Downsampling factor between HR and LR grids.
pub const DEFAULT_SCALE: usize = 4;

const SHIPPED_BANDS: &str = include_str!("../../data/bands.toml");

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum BandId {
    #[serde(rename = "BD2")]
    Bd2,
    #[serde(rename = "BD3")]
    Bd3,
    #[serde(rename = "BD4")]
    Bd4,
    #[serde(rename = "BD5")]
    Bd5,
    #[serde(rename = "BD6")]
    Bd6,
    #[serde(rename = "BD7")]
    Bd7,
    #[serde(rename = "BD8")]
    Bd8,
}

impl BandId {
    pub const ALL: [BandId; 7] = [
        BandId::Bd2,
        BandId::Bd3,
        BandId::Bd4,
        BandId::Bd5,
        BandId::Bd6,
        BandId::Bd7,
        BandId::Bd8,
    ];

    pub fn number(self) -> u8 {
        match self {
            BandId::Bd2 => 2,
            BandId::Bd3 => 3,
            BandId::Bd4 => 4,
            BandId::Bd5 => 5,
            BandId::Bd6 => 6,
            BandId::Bd7 => 7,
            BandId::Bd8 => 8,
        }
    }

    /// SWIR bands carry 480 channels and narrower swaths.
    pub fn is_swir(self) -> bool {
        matches!(self, BandId::Bd7 | BandId::Bd8)
    }

    pub fn default_channels(self) -> usize {
        if self.is_swir() {
            480
        } else {
            497
        }
    }
}

impl fmt::Display for BandId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "BD{}", self.number())
    }
}

impl FromStr for BandId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let n = s
            .trim()
            .to_ascii_uppercase()
            .strip_prefix("BD")
            .and_then(|n| n.parse::<u8>().ok());
        BandId::ALL
            .into_iter()
            .find(|b| Some(b.number()) == n)
            .ok_or_else(|| Error::InvalidSpec(format!("unknown band `{s}` (expected BD2..BD8)")))
    }
}

/// Per-band sensor metadata.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BandSpec {
    pub band_id: BandId,
    pub channels: usize,
    pub snr_linear: f64,
    pub mu: f64,
    pub sigma: f64,
    pub blur_sigma_along: f64,
    pub blur_sigma_cross: f64,
    pub scale: usize,
    pub lr_patch: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BandEntry {
    channels: usize,
    snr_linear: f64,
    mu: f64,
    sigma_along: f64,
    sigma_cross: f64,
    lr_patch: usize,
}

impl BandSpec {
    pub fn new(
        band_id: BandId,
        channels: usize,
        snr_linear: f64,
        mu: f64,
        blur_sigma_along: f64,
        blur_sigma_cross: f64,
        lr_patch: usize,
    ) -> Result<Self> {
        let spec = BandSpec {
            band_id,
            channels,
            snr_linear,
            mu,
            sigma: mu / snr_linear,
            blur_sigma_along,
            blur_sigma_cross,
            scale: DEFAULT_SCALE,
            lr_patch,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Shipped defaults for a band.
    pub fn default_for(band: BandId) -> BandSpec {
        BandTable::shipped()
            .get(band)
            .cloned()
            .expect("shipped band table covers every band")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidSpec(format!("{}: {m}", self.band_id)));
        if self.channels == 0 {
            return bad("channels must be positive".into());
        }
        if !(self.snr_linear > 0.0 && self.snr_linear.is_finite()) {
            return bad(format!("snr_linear must be positive, got {}", self.snr_linear));
        }
        if !(self.mu > 0.0 && self.mu.is_finite()) {
            return bad(format!("mu must be positive, got {}", self.mu));
        }
        if !(self.sigma >= 0.0) {
            return bad(format!("sigma must be nonnegative, got {}", self.sigma));
        }
        if !(self.blur_sigma_along > 0.0 && self.blur_sigma_cross > 0.0) {
            return bad("blur standard deviations must be positive".into());
        }
        if self.scale == 0 || self.lr_patch == 0 {
            return bad("scale and lr_patch must be positive".into());
        }
        Ok(())
    }

    /// Recomputes `sigma` after `mu` or `snr_linear` changed.
    pub fn refresh_sigma(&mut self) {
        self.sigma = self.mu / self.snr_linear;
    }

    pub fn hr_patch(&self) -> usize {
        self.lr_patch * self.scale
    }
}

/// Band metadata keyed by band id, loadable from a TOML file.
#[derive(Clone, Debug, PartialEq)]
pub struct BandTable {
    bands: BTreeMap<BandId, BandSpec>,
}

impl BandTable {
    pub fn shipped() -> BandTable {
        BandTable::parse(SHIPPED_BANDS).expect("shipped band table parses")
    }

    pub fn parse(text: &str) -> Result<BandTable> {
        let raw: BTreeMap<String, BandEntry> = toml::from_str(text)
            .map_err(|e| Error::config("bands", e.to_string()))?;
        let mut bands = BTreeMap::new();
        for (key, e) in raw {
            let id: BandId = key.parse()?;
            let spec = BandSpec::new(
                id,
                e.channels,
                e.snr_linear,
                e.mu,
                e.sigma_along,
                e.sigma_cross,
                e.lr_patch,
            )?;
            bands.insert(id, spec);
        }
        Ok(BandTable { bands })
    }

    /// Loads a user table; bands missing from the file keep shipped defaults.
    pub fn load(path: &Path) -> Result<BandTable> {
        let text = std::fs::read_to_string(path)?;
        let user = BandTable::parse(&text)?;
        let mut table = BandTable::shipped();
        table.bands.extend(user.bands);
        Ok(table)
    }

    pub fn get(&self, band: BandId) -> Option<&BandSpec> {
        self.bands.get(&band)
    }

    pub fn iter(&self) -> impl Iterator<Item = &BandSpec> {
        self.bands.values()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shipped_table_matches_published_metadata() {
        let t = BandTable::shipped();
        let expect = [
            (BandId::Bd2, 239.0, 7.88e-8),
            (BandId::Bd3, 909.0, 2.31e-7),
            (BandId::Bd4, 1344.0, 4.25e-7),
            (BandId::Bd5, 1219.0, 4.29e-7),
            (BandId::Bd6, 1255.0, 4.10e-7),
            (BandId::Bd7, 285.0, 3.25e-8),
            (BandId::Bd8, 229.0, 2.23e-8),
        ];
        for (id, snr, mu) in expect {
            let b = t.get(id).unwrap();
            assert_eq!(b.snr_linear, snr);
            assert_eq!(b.mu, mu);
            assert_eq!(b.sigma, mu / snr);
            assert_eq!(b.scale, 4);
            assert_eq!(b.channels, id.default_channels());
            assert_eq!(b.lr_patch, if id.is_swir() { 52 } else { 112 });
        }
    }

    #[test]
    fn band_ids_round_trip_through_text() {
        for id in BandId::ALL {
            assert_eq!(id.to_string().parse::<BandId>().unwrap(), id);
        }
        assert!("BD1".parse::<BandId>().is_err());
        assert_eq!("bd7".parse::<BandId>().unwrap(), BandId::Bd7);
    }

    #[test]
    fn non_positive_metadata_is_rejected() {
        assert!(BandSpec::new(BandId::Bd2, 497, 0.0, 1e-7, 1.5, 1.0, 112).is_err());
        assert!(BandSpec::new(BandId::Bd2, 497, 239.0, -1.0, 1.5, 1.0, 112).is_err());
        assert!(BandSpec::new(BandId::Bd2, 497, 239.0, 1e-7, 0.0, 1.0, 112).is_err());
    }

    #[test]
    fn user_table_overrides_single_band() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bands.toml");
        std::fs::write(
            &p,
            "[BD5]\nchannels = 16\nsnr_linear = 100.0\nmu = 1.0\nsigma_along = 2.0\nsigma_cross = 0.5\nlr_patch = 28\n",
        )
        .unwrap();
        let t = BandTable::load(&p).unwrap();
        assert_eq!(t.get(BandId::Bd5).unwrap().channels, 16);
        assert_eq!(t.get(BandId::Bd5).unwrap().sigma, 0.01);
        assert_eq!(t.get(BandId::Bd2).unwrap().channels, 497);
    }
}
