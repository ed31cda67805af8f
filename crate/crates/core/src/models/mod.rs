//! Residual refiners over a bicubic baseline: the Unet-S5P variants and the
//! depthwise-separable recursive networks.

mod arch;
mod bicubic;
pub mod graph;
mod net;
pub mod ops;
mod params;

pub use arch::{
    count_params, ArchId, DscBlockCfg, DscrCfg, Init, LayerSpec, ModelCfg, SkipFusion, SkipSource, UnetCfg,
};
pub use bicubic::{bicubic_resize, bicubic_upsample, bicubic_upsample_array};
pub use graph::{Eval, Graph, Tape};
pub use net::{dsc_forward, dscr_forward, forward, network, predict, unet_s5p_forward, DscParams};
pub use params::{config_fingerprint, ModelParams, ParamTensor};
pub mod gradcheck;

#[cfg(test)]
mod tests;
