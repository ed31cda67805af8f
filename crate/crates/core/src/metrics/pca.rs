use nalgebra::{DMatrix, SymmetricEigen};

use crate::array::Array3;
use crate::error::{Error, Result};
use crate::sensor::HyperCube;

/// Top-three principal axes of a reference cube's pixel spectra.
#[derive(Clone, Debug, PartialEq)]
pub struct PcaBasis {
    pub mean: Vec<f64>,
    /// Three unit vectors of length `channels`, by decreasing variance.
    pub components: [Vec<f64>; 3],
    pub explained: [f64; 3],
    /// Score range of each component on the reference cube.
    pub ranges: [(f64, f64); 3],
}

fn centred(x: &Array3, mean: &[f64]) -> Vec<f64> {
    let mut v = x.as_slice().to_vec();
    for (ch, plane) in v.chunks_mut(x.plane_len()).enumerate() {
        plane.iter_mut().for_each(|a| *a -= mean[ch]);
    }
    v
}

fn scores(x: &Array3, basis: &PcaBasis) -> [Vec<f64>; 3] {
    let xc = centred(x, &basis.mean);
    let n = x.plane_len();
    std::array::from_fn(|k| {
        let mut s = vec![0.0; n];
        for (ch, plane) in xc.chunks(n).enumerate() {
            let w = basis.components[k][ch];
            s.iter_mut().zip(plane).for_each(|(o, v)| *o += w * v);
        }
        s
    })
}

impl PcaBasis {
    pub fn fit(gt: &Array3) -> Result<PcaBasis> {
        let (c, _, _) = gt.shape();
        if c < 3 {
            return Err(Error::Shape(format!("PCA-RGB needs at least 3 channels, got {c}")));
        }
        let n = gt.plane_len();
        let mean: Vec<f64> = gt.planes().map(|p| p.iter().sum::<f64>() / n as f64).collect();
        let xc = centred(gt, &mean);
        let mut cov = vec![0.0; c * c];
        // SAFETY: xc is c x n row-major, cov is c x c row-major.
        unsafe {
            matrixmultiply::dgemm(
                c,
                n,
                c,
                1.0 / n as f64,
                xc.as_ptr(),
                n as isize,
                1,
                xc.as_ptr(),
                1,
                n as isize,
                0.0,
                cov.as_mut_ptr(),
                c as isize,
                1,
            );
        }
        let eig = SymmetricEigen::new(DMatrix::from_row_slice(c, c, &cov));
        let mut order: Vec<usize> = (0..c).collect();
        order.sort_by(|a, b| eig.eigenvalues[*b].total_cmp(&eig.eigenvalues[*a]));
        let total: f64 = eig.eigenvalues.iter().map(|v| v.max(0.0)).sum();
        let components: [Vec<f64>; 3] = std::array::from_fn(|k| {
            let mut v: Vec<f64> = eig.eigenvectors.column(order[k]).iter().cloned().collect();
            let big = v.iter().cloned().fold(0.0f64, |m, a| if a.abs() > m.abs() { a } else { m });
            if big < 0.0 {
                v.iter_mut().for_each(|a| *a = -*a);
            }
            v
        });
        let explained = std::array::from_fn(|k| {
            if total > 0.0 {
                eig.eigenvalues[order[k]].max(0.0) / total
            } else {
                0.0
            }
        });
        let mut basis = PcaBasis {
            mean,
            components,
            explained,
            ranges: [(0.0, 0.0); 3],
        };
        let s = scores(gt, &basis);
        basis.ranges = std::array::from_fn(|k| {
            s[k].iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(*v), hi.max(*v)))
        });
        Ok(basis)
    }

    /// Component scores as a `(3, rows, cols)` array, unscaled.
    pub fn project(&self, x: &Array3) -> Result<Array3> {
        if x.channels() != self.mean.len() {
            return Err(Error::Shape(format!(
                "basis fitted on {} channels applied to {}",
                self.mean.len(),
                x.channels()
            )));
        }
        let s = scores(x, self);
        Array3::from_vec(3, x.rows(), x.cols(), s.concat())
    }

    /// Scores scaled by the reference ranges and clipped to `[0, 1]`.
    pub fn to_rgb(&self, x: &Array3) -> Result<Array3> {
        let mut p = self.project(x)?;
        for (k, plane) in p.planes_mut().enumerate() {
            let (lo, hi) = self.ranges[k];
            let span = if hi > lo { hi - lo } else { 1.0 };
            plane.iter_mut().for_each(|v| *v = ((*v - lo) / span).clamp(0.0, 1.0));
        }
        Ok(p)
    }
}

/// RGB renderings of `gt` and `others`, all with the basis fitted on `gt`.
pub fn pca_rgb(gt: &HyperCube, others: &[&HyperCube]) -> Result<Vec<Array3>> {
    let basis = PcaBasis::fit(&gt.data)?;
    let mut out = vec![basis.to_rgb(&gt.data)?];
    for o in others {
        out.push(basis.to_rgb(&o.data)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hsio::synth_scene;
    use crate::models::bicubic_upsample;
    use crate::sensor::{BandId, Degradation, Space};

    #[test]
    fn own_projection_gives_top_scores() {
        let gt = synth_scene(BandId::Bd3, 12, 24, 24, 1, 2.0, 4).unwrap();
        let basis = PcaBasis::fit(&gt.data).unwrap();
        let s = basis.project(&gt.data).unwrap();
        let var = |p: &[f64]| {
            let m = p.iter().sum::<f64>() / p.len() as f64;
            p.iter().map(|v| (v - m).powi(2)).sum::<f64>() / p.len() as f64
        };
        let v: Vec<f64> = s.planes().map(var).collect();
        assert!(v[0] >= v[1] && v[1] >= v[2] && v[2] > 0.0);
        for (i, a) in basis.components.iter().enumerate() {
            for (j, b) in basis.components.iter().enumerate() {
                let d: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
                assert!((d - if i == j { 1.0 } else { 0.0 }).abs() < 1e-9);
            }
        }
        let rgb = pca_rgb(&gt, &[]).unwrap();
        let (lo, hi) = rgb[0].min_max();
        assert!(lo == 0.0 && hi == 1.0);
    }

    #[test]
    fn rank_one_scene_has_one_component() {
        let gt = synth_scene(BandId::Bd3, 16, 32, 32, 2, 2.0, 1).unwrap();
        let basis = PcaBasis::fit(&gt.data).unwrap();
        assert!(basis.explained[0] >= 0.999, "{:?}", basis.explained);
    }

    #[test]
    fn shared_basis_for_reconstructions() {
        let gt = synth_scene(BandId::Bd3, 8, 32, 32, 3, 2.0, 3).unwrap();
        let a = Degradation::new(crate::sensor::BlurKernel::new(1.5, 1.0, 4.0).unwrap(), 4).unwrap();
        let lr = a.apply_cube(&gt).unwrap();
        let up = bicubic_upsample(&lr, 4).unwrap();
        let rgb = pca_rgb(&gt, &[&up]).unwrap();
        assert_eq!(rgb.len(), 2);
        assert_eq!(rgb[0].shape(), rgb[1].shape());
        assert_eq!(rgb[0].shape(), (3, 32, 32));
    }

    #[test]
    fn too_few_channels() {
        let x = HyperCube::new(Array3::zeros(2, 4, 4), BandId::Bd3, Space::Raw).unwrap();
        assert!(pca_rgb(&x, &[]).is_err());
    }
}
