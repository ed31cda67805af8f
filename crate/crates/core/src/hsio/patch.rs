use log::warn;

use crate::error::{Error, Result};
use crate::sensor::HyperCube;

pub const DEFAULT_ALONG_CROP: usize = 512;
pub const DEFAULT_POLAR_FRACTION: f64 = 0.05;

#[derive(Clone, Debug, PartialEq)]
pub struct Patch {
    pub row: usize,
    pub col: usize,
    pub size: usize,
    pub cube: HyperCube,
}

/// Removes `fraction` of the scanlines at each along-track end.
pub fn discard_polar(cube: &HyperCube, fraction: f64) -> Result<HyperCube> {
    if !(0.0..0.5).contains(&fraction) {
        return Err(Error::config(
            "data.polar_fraction",
            format!("must lie in [0, 0.5), got {fraction}"),
        ));
    }
    let h = cube.rows();
    let cut = (fraction * h as f64).floor() as usize;
    Ok(cube.with_data(cube.data.crop(cut, 0, h - 2 * cut, cube.cols())?))
}

/// Along-track crops of `along_crop` rows, each tiled into square patches;
/// remainders are discarded. Coordinates refer to the input cube.
pub fn crop_and_patch(cube: &HyperCube, along_crop: usize, patch: usize) -> Result<Vec<Patch>> {
    if along_crop == 0 || patch == 0 {
        return Err(Error::config("data", "crop and patch sizes must be positive"));
    }
    if patch > along_crop {
        return Err(Error::config(
            "data.patch",
            format!("patch {patch} exceeds the along-track crop {along_crop}"),
        ));
    }
    let (_, h, w) = cube.shape();
    if h < along_crop || w < patch {
        warn!("cube {h}x{w} is smaller than one {along_crop}-row crop of {patch}-pixel patches");
        return Ok(Vec::new());
    }
    let mut out = Vec::new();
    for crop in 0..h / along_crop {
        let r0 = crop * along_crop;
        for pr in 0..along_crop / patch {
            for pc in 0..w / patch {
                let (row, col) = (r0 + pr * patch, pc * patch);
                out.push(Patch {
                    row,
                    col,
                    size: patch,
                    cube: cube.with_data(cube.data.crop(row, col, patch, patch)?),
                });
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::array::Array3;
    use crate::sensor::{BandId, Space};

    fn cube(h: usize, w: usize) -> HyperCube {
        HyperCube::new(
            Array3::from_fn(1, h, w, |_, r, q| (r * w + q) as f64),
            BandId::Bd2,
            Space::Raw,
        )
        .unwrap()
    }

    #[test]
    fn tall_granule_yields_eight_crops() {
        let x = cube(4172, 112);
        let p = crop_and_patch(&x, 512, 112).unwrap();
        assert_eq!(p.len(), 8 * 4);
        assert_eq!(4172 - 8 * 512, 76);
        assert!(p.iter().all(|q| q.row + q.size <= 8 * 512));
    }

    #[test]
    fn exact_and_ragged_tiling() {
        assert_eq!(crop_and_patch(&cube(512, 448), 512, 112).unwrap().len(), 16);
        let p = crop_and_patch(&cube(512, 450), 512, 112).unwrap();
        assert_eq!(p.len(), 16);
        assert!(p.iter().all(|q| q.col + 112 <= 448));
    }

    #[test]
    fn patches_carry_their_pixels() {
        let x = cube(64, 40);
        for p in crop_and_patch(&x, 32, 16).unwrap() {
            assert_eq!(p.cube.data.get(0, 0, 0), x.data.get(0, p.row, p.col));
            // never straddles a crop boundary
            assert_eq!(p.row / 32, (p.row + p.size - 1) / 32);
        }
    }

    #[test]
    fn too_small_is_empty() {
        assert!(crop_and_patch(&cube(100, 100), 512, 112).unwrap().is_empty());
    }

    #[test]
    fn polar_discard_trims_both_ends() {
        let x = cube(100, 3);
        let y = discard_polar(&x, 0.05).unwrap();
        assert_eq!(y.rows(), 90);
        assert_eq!(y.data.get(0, 0, 0), x.data.get(0, 5, 0));
        assert_eq!(discard_polar(&x, 0.0).unwrap(), x);
    }
}
