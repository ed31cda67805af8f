use serde::{Deserialize, Serialize};

use crate::array::Array3;
use crate::error::{Error, Result};
use crate::sensor::BandId;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Space {
    Raw,
    Normalized,
}

/// One band's radiance image, channels x along-track x cross-track.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HyperCube {
    pub data: Array3,
    pub band_id: BandId,
    pub space: Space,
}

impl HyperCube {
    pub fn new(data: Array3, band_id: BandId, space: Space) -> Result<Self> {
        if data.rows() == 0 || data.cols() == 0 || data.channels() == 0 {
            return Err(Error::Shape(format!(
                "hypercube needs non-empty dimensions, got {:?}",
                data.shape()
            )));
        }
        if !data.all_finite() {
            return Err(Error::Numeric("hypercube contains non-finite values".into()));
        }
        Ok(HyperCube {
            data,
            band_id,
            space,
        })
    }

    /// Same band and space, new data.
    pub fn with_data(&self, data: Array3) -> HyperCube {
        HyperCube {
            data,
            band_id: self.band_id,
            space: self.space,
        }
    }

    pub fn channels(&self) -> usize {
        self.data.channels()
    }

    pub fn rows(&self) -> usize {
        self.data.rows()
    }

    pub fn cols(&self) -> usize {
        self.data.cols()
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        self.data.shape()
    }

    pub fn expect_space(&self, space: Space, what: &str) -> Result<()> {
        if self.space != space {
            return Err(Error::Contract(format!(
                "{what} requires a {space:?} cube, got {:?}",
                self.space
            )));
        }
        Ok(())
    }
}
