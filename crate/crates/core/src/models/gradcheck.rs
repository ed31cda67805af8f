//! Central finite-difference validation of analytic parameter gradients.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::models::ModelParams;

/// One loss evaluation: additive terms whose sum is the loss, and the sign
/// pattern of every rectifier input met on the way.
#[derive(Clone, Debug, Default)]
pub struct Probe {
    pub terms: Vec<f64>,
    pub pattern: Vec<bool>,
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub checked: usize,
    /// Indices skipped because the perturbation crossed a rectifier kink.
    pub kinks: usize,
    pub max_rel_error: f64,
    pub worst_index: usize,
}

/// Compares flattened `grads` with central differences at `samples`
/// distinct random indices. Terms are differenced one by one so large
/// losses do not swamp small gradients. An index whose two perturbed
/// evaluations disagree on any rectifier sign is not differentiable there
/// and is replaced by a fresh draw. The relative error uses
/// `max(|a|, |n|, floor)` as denominator.
pub fn check_gradients(
    params: &ModelParams,
    grads: &[f64],
    mut loss: impl FnMut(&ModelParams) -> Result<Probe>,
    samples: usize,
    step: f64,
    floor: f64,
    seed: u64,
) -> Result<GradCheckReport> {
    let theta = params.flat();
    let n = theta.len();
    if grads.len() != n {
        return Err(Error::Shape(format!("{} gradients for {n} parameters", grads.len())));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seen = vec![false; n];
    let mut p = params.clone();
    let mut t = theta.clone();
    let mut report = GradCheckReport {
        checked: 0,
        kinks: 0,
        max_rel_error: 0.0,
        worst_index: 0,
    };
    let mut tried = 0;
    while report.checked < samples.min(n) && tried < n {
        let i = rng.random_range(0..n);
        if seen[i] {
            continue;
        }
        seen[i] = true;
        tried += 1;
        t[i] = theta[i] + step;
        p.set_flat(&t)?;
        let up = loss(&p)?;
        t[i] = theta[i] - step;
        p.set_flat(&t)?;
        let down = loss(&p)?;
        t[i] = theta[i];
        if up.pattern != down.pattern {
            report.kinks += 1;
            continue;
        }
        let diff: f64 = up.terms.iter().zip(&down.terms).map(|(u, d)| u - d).sum();
        let numeric = diff / (2.0 * step);
        let a = grads[i];
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(floor);
        if rel > report.max_rel_error {
            report.max_rel_error = rel;
            report.worst_index = i;
        }
        report.checked += 1;
    }
    Ok(report)
}
