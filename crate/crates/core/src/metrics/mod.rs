//! Reference and blind image metrics, PCA-RGB rendering and reports.

mod blind;
mod image;
mod pca;
mod reference;
mod report;

pub use blind::{blind_metrics, consistency, sharpness, BlindMetrics};
pub use image::{side_by_side, write_rgb_png};
pub use pca::{pca_rgb, PcaBasis};
pub use reference::{dynamic_range, laplacian, psnr, reference_metrics, scc, ssim, Psnr, ReferenceMetrics, PSNR_CAP};
pub use report::{ImageMetrics, MetricReport, CONVENTIONS};

use crate::array::Array3;
use crate::error::Result;

/// Plug-in perceptual metric over two `(3, rows, cols)` images in `[0, 1]`,
/// such as LPIPS. None ships with this crate.
pub trait PerceptualMetric {
    fn name(&self) -> &str;
    fn score(&self, a: &Array3, b: &Array3) -> Result<f64>;
}
