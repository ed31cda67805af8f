use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hsio::{DatasetManifest, Split};
use crate::sensor::{BandId, HyperCube, Space};

const STD_FLOOR: f64 = 1e-12;

/// Per-channel training-split mean and population std.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub band_id: BandId,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Inverse,
}

impl ChannelStats {
    pub fn channels(&self) -> usize {
        self.mean.len()
    }

    /// Raw-space noise std expressed per normalized channel.
    pub fn normalized_sigma(&self, sigma: f64) -> Vec<f64> {
        self.std.iter().map(|s| sigma / s).collect()
    }
}

pub fn compute_channel_stats(training_cubes: &[&HyperCube]) -> Result<ChannelStats> {
    let first = training_cubes
        .first()
        .ok_or_else(|| Error::Contract("channel statistics need at least one cube".into()))?;
    let c = first.channels();
    for cube in training_cubes {
        if cube.band_id != first.band_id || cube.channels() != c {
            return Err(Error::Contract(format!(
                "mixed inputs: {} with {} channels vs {} with {c}",
                cube.band_id,
                cube.channels(),
                first.band_id
            )));
        }
        cube.expect_space(Space::Raw, "channel statistics")?;
    }
    let mut mean = vec![0.0; c];
    let mut std = vec![0.0; c];
    for ch in 0..c {
        let n: usize = training_cubes.iter().map(|x| x.data.plane_len()).sum();
        let m = training_cubes
            .iter()
            .map(|x| x.data.plane(ch).iter().sum::<f64>())
            .sum::<f64>()
            / n as f64;
        let v = training_cubes
            .iter()
            .map(|x| x.data.plane(ch).iter().map(|v| (v - m).powi(2)).sum::<f64>())
            .sum::<f64>()
            / n as f64;
        mean[ch] = m;
        std[ch] = v.sqrt().max(STD_FLOOR);
    }
    Ok(ChannelStats {
        mean,
        std,
        band_id: first.band_id,
    })
}

/// Statistics guarded by the manifest: every input must belong to the
/// training split.
pub fn compute_train_stats(
    manifest: &DatasetManifest,
    cubes: &[(&str, &HyperCube)],
) -> Result<ChannelStats> {
    for (id, _) in cubes {
        match manifest.split_of(id) {
            Some(Split::Train) => {}
            Some(s) => {
                return Err(Error::Contract(format!(
                    "image `{id}` is in the {s:?} split; statistics use training images only"
                )))
            }
            None => {
                return Err(Error::Contract(format!("image `{id}` is not in the manifest")))
            }
        }
    }
    let refs: Vec<&HyperCube> = cubes.iter().map(|(_, c)| *c).collect();
    compute_channel_stats(&refs)
}

pub fn normalize(cube: &HyperCube, stats: &ChannelStats, direction: Direction) -> Result<HyperCube> {
    if cube.band_id != stats.band_id || cube.channels() != stats.channels() {
        return Err(Error::Contract(format!(
            "statistics for {} ({} ch) applied to {} ({} ch)",
            stats.band_id,
            stats.channels(),
            cube.band_id,
            cube.channels()
        )));
    }
    let (need, space) = match direction {
        Direction::Forward => (Space::Raw, Space::Normalized),
        Direction::Inverse => (Space::Normalized, Space::Raw),
    };
    cube.expect_space(need, "normalize")?;
    let mut data = cube.data.clone();
    for (ch, plane) in data.planes_mut().enumerate() {
        let (m, s) = (stats.mean[ch], stats.std[ch]);
        match direction {
            Direction::Forward => plane.iter_mut().for_each(|v| *v = (*v - m) / s),
            Direction::Inverse => plane.iter_mut().for_each(|v| *v = *v * s + m),
        }
    }
    Ok(HyperCube {
        data,
        band_id: cube.band_id,
        space,
    })
}
