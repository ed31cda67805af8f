use crate::array::Array3;
use crate::error::{Error, Result};
use crate::models::{predict, ModelParams};
use crate::sensor::{HyperCube, Space};

/// LR tile side used when an input is too large for one pass.
pub const DEFAULT_TILE: usize = 112;
/// Overlap between neighbouring tiles, in output pixels.
pub const DEFAULT_OVERLAP: usize = 16;

/// Tile starts along one axis and the output span each tile owns.
fn plan_axis(n: usize, tile: usize, overlap: usize, s: usize) -> Vec<(usize, usize, usize)> {
    if n <= tile {
        return vec![(0, 0, n * s)];
    }
    let stride = tile - overlap;
    let mut starts: Vec<usize> = (0..).map(|k| k * stride).take_while(|a| a + tile < n).collect();
    starts.push(n - tile);
    starts.dedup();
    let mut out = Vec::with_capacity(starts.len());
    let mut lo = 0;
    for (k, &a) in starts.iter().enumerate() {
        let hi = match starts.get(k + 1) {
            Some(&b) => (b * s + (a + tile) * s) / 2,
            None => n * s,
        };
        out.push((a, lo, hi));
        lo = hi;
    }
    out
}

/// Super-resolves `cube` in overlapping `tile x tile` LR tiles; each tile
/// keeps only the output up to the middle of its overlaps.
pub fn infer_shr_tiled(params: &ModelParams, cube: &HyperCube, tile: usize, overlap: usize) -> Result<HyperCube> {
    cube.expect_space(Space::Normalized, "super-resolution input")?;
    let s = params.scale;
    let m = params.cfg.spatial_multiple();
    if overlap % s != 0 {
        return Err(Error::Tiling(format!("overlap {overlap} is not a multiple of the scale {s}")));
    }
    let ov = overlap / s;
    if tile == 0 || ov >= tile {
        return Err(Error::Tiling(format!("tile {tile} cannot hold an overlap of {ov} input pixels")));
    }
    let (c, h, w) = cube.shape();
    let check = |n: usize, what: &str| -> Result<usize> {
        let t = tile.min(n);
        if (t * s) % m != 0 {
            return Err(Error::Tiling(format!(
                "{what} tile of {t} input pixels gives {} output pixels, not a multiple of {m}",
                t * s
            )));
        }
        Ok(t)
    };
    let (th, tw) = (check(h, "along-track")?, check(w, "cross-track")?);
    let rows = plan_axis(h, th, ov, s);
    let cols = plan_axis(w, tw, ov, s);
    let mut out = Array3::zeros(c, h * s, w * s);
    for &(r0, rlo, rhi) in &rows {
        for &(c0, clo, chi) in &cols {
            let y = cube.data.crop(r0, c0, th, tw)?;
            let x = predict(params, &y)?;
            let keep = x.crop(rlo - r0 * s, clo - c0 * s, rhi - rlo, chi - clo)?;
            out.paste(&keep, rlo, clo);
        }
    }
    Ok(cube.with_data(out))
}

/// Super-resolves `cube` by the model scale, tiling inputs larger than
/// `DEFAULT_TILE`.
pub fn infer_shr(params: &ModelParams, cube: &HyperCube) -> Result<HyperCube> {
    infer_shr_tiled(params, cube, DEFAULT_TILE, DEFAULT_OVERLAP)
}
