//! Band-wise training: frozen LR simulation, the optimizer schedule, the
//! three training settings, checkpoints and tiled inference.

mod checkpoint;
mod config;
mod dataset;
mod infer;
mod optim;
mod trainer;

pub use dataset::{hash_dir, patch_seed, prepare_dataset, simulate_lr_dataset, CachedDataset, Entry, PrepareCfg, SimInfo};
pub use optim::{Adam, Plateau};
pub use checkpoint::Checkpoint;
pub use config::{Diagnostics, Setting, SureOpts, TrainConfig};
pub use infer::{infer_shr, infer_shr_tiled, DEFAULT_OVERLAP, DEFAULT_TILE};
pub use trainer::{train_band, train_band_from, EpochRecord, TrainOutcome};
