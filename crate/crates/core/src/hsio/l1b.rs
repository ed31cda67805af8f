use std::path::Path;

use hdf5_metno as hdf5;
use ndarray::Array4;

use crate::array::Array3;
use crate::error::{Error, Result};
use crate::sensor::{BandId, HyperCube, Space};

/// Radiance dataset path inside an L1B granule; `{n}` is the band number.
pub const L1B_TEMPLATE: &str = "BAND{n}_RADIANCE/STANDARD_MODE/OBSERVATIONS/radiance";
/// netCDF default float fill value, far above any cleaning threshold.
pub const L1B_FILL_VALUE: f32 = 9.969_21e36;

fn dataset_path(template: &str, band: BandId) -> String {
    template.replace("{n}", &band.number().to_string())
}

pub fn load_l1b(path: &Path, band_id: BandId) -> Result<HyperCube> {
    load_l1b_with(path, band_id, L1B_TEMPLATE)
}

/// Reads `(time, scanline, ground_pixel, spectral)` radiance into a
/// channels-first raw cube. Non-finite samples become the fill value.
pub fn load_l1b_with(path: &Path, band_id: BandId, template: &str) -> Result<HyperCube> {
    if !path.exists() {
        return Err(Error::MissingArtifact(path.to_path_buf()));
    }
    let file = hdf5::File::open(path)?;
    let name = dataset_path(template, band_id);
    let ds = file.dataset(&name).map_err(|_| Error::Ingestion(name.clone()))?;
    let raw: ndarray::ArrayD<f32> = ds.read_dyn()?;
    let shape = raw.shape().to_vec();
    let (rows, cols, chans) = match shape[..] {
        [1, s, g, c] | [s, g, c] => (s, g, c),
        _ => {
            return Err(Error::Ingestion(format!(
                "{name} (expected 3-D or 4-D radiance, got shape {shape:?})"
            )))
        }
    };
    let flat = raw.into_shape_with_order((rows, cols, chans)).map_err(|e| Error::Shape(e.to_string()))?;
    let data = Array3::from_fn(chans, rows, cols, |c, r, q| {
        let v = flat[[r, q, c]];
        if v.is_finite() {
            v as f64
        } else {
            L1B_FILL_VALUE as f64
        }
    });
    HyperCube::new(data, band_id, Space::Raw)
}

/// Writes a cube in the L1B radiance layout; `fills` marks
/// `(channel, row, col)` samples to overwrite with the fill value.
pub fn write_l1b_like(path: &Path, cube: &HyperCube, fills: &[(usize, usize, usize)]) -> Result<()> {
    let (c, h, w) = cube.shape();
    let mut arr = Array4::<f32>::zeros((1, h, w, c));
    for ch in 0..c {
        for r in 0..h {
            for q in 0..w {
                arr[[0, r, q, ch]] = cube.data.get(ch, r, q) as f32;
            }
        }
    }
    for &(ch, r, q) in fills {
        arr[[0, r, q, ch]] = L1B_FILL_VALUE;
    }
    let file = hdf5::File::create(path)?;
    let name = dataset_path(L1B_TEMPLATE, cube.band_id);
    let (groups, leaf) = name.rsplit_once('/').expect("template has groups");
    let group = file.create_group(groups)?;
    let ds = group.new_dataset::<f32>().shape(arr.shape()).create(leaf)?;
    ds.write(&arr)?;
    Ok(())
}
