//! Radiance ingestion, cleaning, normalization, patching, splits and a
//! synthetic scene generator.

mod clean;
mod l1b;
mod manifest;
pub mod npy;
mod patch;
mod stats;
mod synth;

pub use clean::{clean, DEFAULT_THRESHOLD};
pub use l1b::{load_l1b, load_l1b_with, write_l1b_like, L1B_FILL_VALUE, L1B_TEMPLATE};
pub use manifest::{split_counts, split_scanlines, DatasetManifest, PatchCoord, Split};
pub use patch::{crop_and_patch, discard_polar, Patch, DEFAULT_ALONG_CROP, DEFAULT_POLAR_FRACTION};
pub use stats::{compute_channel_stats, compute_train_stats, normalize, ChannelStats, Direction};
pub use synth::synth_scene;
