//! Training objectives: supervised MSE, SURE with Monte Carlo divergence,
//! scale-equivariance and their weighted sum.

mod eq;
mod objective;
mod sure;

pub use eq::{eq_crop_multiple, eq_loss, zoom_transform, EqCfg};
pub use objective::{mse_grad, sse_grad, ssl_objective, ssl_total, SslEval, SslTerms};
pub use sure::{
    draw_probe, mc_divergence, mc_divergence_weighted, mse_loss, sure_loss, ProbeDist, SureCfg, SureTerms,
};

use crate::array::Array3;
use crate::error::Result;
use crate::models::{predict, ModelParams};

/// Anything mapping an LR measurement to an HR estimate.
pub trait Reconstructor {
    fn reconstruct(&self, y: &Array3) -> Result<Array3>;

    /// Output sizes must be multiples of this.
    fn spatial_multiple(&self) -> usize {
        1
    }
}

impl Reconstructor for ModelParams {
    fn reconstruct(&self, y: &Array3) -> Result<Array3> {
        predict(self, y)
    }

    fn spatial_multiple(&self) -> usize {
        self.cfg.spatial_multiple()
    }
}

impl<F: Fn(&Array3) -> Result<Array3>> Reconstructor for F {
    fn reconstruct(&self, y: &Array3) -> Result<Array3> {
        self(y)
    }
}
