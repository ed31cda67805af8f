//! Image formation: band metadata, blur kernels, the degradation operator and
//! the SNR-derived noise model.

mod band;
mod cube;
mod degrade;
mod kernel;
mod noise;

pub use band::{BandId, BandSpec, BandTable, DEFAULT_SCALE};
pub use cube::{HyperCube, Space};
pub use degrade::{degrade, Degradation};
pub use kernel::{gaussian_1d, make_blur_kernel, BlurKernel, DEFAULT_TRUNCATION};
pub use noise::{add_noise, add_noise_per_channel, noise_sigma_from_metadata, snr_db_to_linear};
