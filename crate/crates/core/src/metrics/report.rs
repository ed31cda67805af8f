use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::metrics::{BlindMetrics, Psnr, ReferenceMetrics};
use crate::sensor::{BandId, Space};

pub const CONVENTIONS: [&str; 4] = [
    "psnr = 10*log10(R^2/MSE), R = max-min of the reference set, capped at 100 dB",
    "ssim: 11x11 Gaussian window (std 1.5), k1=0.01, k2=0.03, channel mean",
    "consistency = psnr(A(xhat), y) with R = max-min of y",
    "sharpness = 0.5*mean Sobel magnitude + 0.5*mean 5x5 local variance, channel mean",
];

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ImageMetrics {
    pub image: String,
    pub model: String,
    pub psnr: Option<Psnr>,
    pub ssim: Option<f64>,
    pub scc: Option<f64>,
    pub consistency: Option<Psnr>,
    pub sharpness: Option<f64>,
}

impl ImageMetrics {
    pub fn new(image: &str, model: &str, reference: Option<&ReferenceMetrics>, blind: Option<&BlindMetrics>) -> Self {
        ImageMetrics {
            image: image.to_string(),
            model: model.to_string(),
            psnr: reference.map(|r| r.psnr),
            ssim: reference.map(|r| r.ssim),
            scc: reference.map(|r| r.scc),
            consistency: blind.map(|b| b.consistency),
            sharpness: blind.map(|b| b.sharpness),
        }
    }

    /// `(metric, value, capped)` triples in column order.
    pub fn values(&self) -> Vec<(&'static str, f64, bool)> {
        let mut v = Vec::new();
        if let Some(p) = self.psnr {
            v.push(("psnr", p.db, p.capped));
        }
        if let Some(s) = self.ssim {
            v.push(("ssim", s, false));
        }
        if let Some(s) = self.scc {
            v.push(("scc", s, false));
        }
        if let Some(p) = self.consistency {
            v.push(("consistency", p.db, p.capped));
        }
        if let Some(s) = self.sharpness {
            v.push(("sharpness", s, false));
        }
        v
    }
}

fn mean_psnr(xs: &[Psnr]) -> Option<Psnr> {
    (!xs.is_empty()).then(|| Psnr {
        db: xs.iter().map(|p| p.db).sum::<f64>() / xs.len() as f64,
        capped: xs.iter().any(|p| p.capped),
    })
}

fn mean(xs: &[f64]) -> Option<f64> {
    (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub band_id: BandId,
    pub space: Space,
    /// PSNR range used for the reference metrics.
    pub range: Option<f64>,
    pub conventions: Vec<String>,
    pub rows: Vec<ImageMetrics>,
}

impl MetricReport {
    pub fn new(band_id: BandId, space: Space, range: Option<f64>) -> Self {
        MetricReport {
            band_id,
            space,
            range,
            conventions: CONVENTIONS.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: ImageMetrics) {
        self.rows.push(row);
    }

    /// One aggregate row per model, in first-appearance order.
    pub fn means(&self) -> Vec<ImageMetrics> {
        let mut order: Vec<&str> = Vec::new();
        let mut groups: BTreeMap<&str, Vec<&ImageMetrics>> = BTreeMap::new();
        for r in &self.rows {
            if !groups.contains_key(r.model.as_str()) {
                order.push(&r.model);
            }
            groups.entry(&r.model).or_default().push(r);
        }
        order
            .into_iter()
            .map(|m| {
                let g = &groups[m];
                let col = |f: &dyn Fn(&ImageMetrics) -> Option<f64>| -> Vec<f64> { g.iter().filter_map(|r| f(r)).collect() };
                let ps: Vec<Psnr> = g.iter().filter_map(|r| r.psnr).collect();
                let cs: Vec<Psnr> = g.iter().filter_map(|r| r.consistency).collect();
                ImageMetrics {
                    image: "mean".into(),
                    model: m.to_string(),
                    psnr: mean_psnr(&ps),
                    ssim: mean(&col(&|r| r.ssim)),
                    scc: mean(&col(&|r| r.scc)),
                    consistency: mean_psnr(&cs),
                    sharpness: mean(&col(&|r| r.sharpness)),
                }
            })
            .collect()
    }

    pub fn mean_of(&self, model: &str) -> Option<ImageMetrics> {
        self.means().into_iter().find(|r| r.model == model)
    }

    /// Long-format table: one row per (image, model, metric), then the
    /// per-model means.
    pub fn to_tsv(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# band\t{}\tspace\t{:?}", self.band_id, self.space);
        if let Some(r) = self.range {
            let _ = writeln!(s, "# range\t{r:e}");
        }
        for c in &self.conventions {
            let _ = writeln!(s, "# {c}");
        }
        s.push_str("image\tmodel\tmetric\tvalue\tcapped\n");
        for r in self.rows.iter().chain(self.means().iter()) {
            for (m, v, capped) in r.values() {
                let _ = writeln!(s, "{}\t{}\t{m}\t{v:.6}\t{capped}", r.image, r.model);
            }
        }
        s
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("report.tsv"), self.to_tsv())?;
        std::fs::write(dir.join("report.json"), serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<MetricReport> {
        if !path.exists() {
            return Err(crate::error::Error::MissingArtifact(path.to_path_buf()));
        }
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn means_and_table() {
        let mut r = MetricReport::new(BandId::Bd3, Space::Normalized, Some(2.0));
        for (i, (p, cap)) in [(30.0, false), (40.0, true)].into_iter().enumerate() {
            r.push(ImageMetrics {
                image: format!("im{i}"),
                model: "bicubic".into(),
                psnr: Some(Psnr { db: p, capped: cap }),
                sharpness: Some(i as f64),
                ..ImageMetrics::default()
            });
        }
        let m = r.mean_of("bicubic").unwrap();
        assert_eq!(m.psnr, Some(Psnr { db: 35.0, capped: true }));
        assert_eq!(m.sharpness, Some(0.5));
        assert_eq!(m.ssim, None);
        let t = r.to_tsv();
        assert_eq!(t.lines().filter(|l| !l.starts_with('#')).count(), 1 + 4 + 2);
        assert!(t.contains("mean\tbicubic\tpsnr\t35.000000\ttrue"));
        let tmp = tempfile::tempdir().unwrap();
        r.save(tmp.path()).unwrap();
        assert_eq!(MetricReport::load(&tmp.path().join("report.json")).unwrap(), r);
    }
}
