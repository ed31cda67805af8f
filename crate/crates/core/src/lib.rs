//! Self-supervised single-image super-resolution for Sentinel-5P
//! hyperspectral radiance bands.

pub mod array;
pub mod error;
pub mod sensor;

pub use array::Array3;
pub use error::{Error, Result};
pub mod cli;
pub mod filter;
pub mod hsio;
pub mod losses;
pub mod metrics;
pub mod models;
pub mod training;
