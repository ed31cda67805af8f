use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::array::Array3;
use crate::error::{Error, Result};
use crate::losses::eq::{eq_target, interior_residual};
use crate::losses::{draw_probe, eq_loss, sure_loss, EqCfg, Reconstructor, SureCfg};
use crate::models::{network, Graph, ModelParams, Tape};
use crate::sensor::Degradation;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SslTerms {
    pub sure_fidelity: f64,
    pub sure_penalty: f64,
    pub divergence: f64,
    pub eq: f64,
    pub total: f64,
}

/// Objective value with optional gradients. `pieces` are additive terms
/// summing to the total and `pattern` holds every rectifier sign met,
/// both for finite-difference checks.
#[derive(Clone, Debug)]
pub struct SslEval {
    pub terms: SslTerms,
    pub grads: Option<Vec<Vec<f64>>>,
    pub pieces: Vec<f64>,
    pub pattern: Vec<bool>,
    /// Zoomed target used by the equivariance term.
    pub target: Option<Array3>,
}

/// Value of `SURE + lambda * EQ` for any reconstructor.
pub fn ssl_total(
    f: &impl Reconstructor,
    y: &Array3,
    a: &Degradation,
    sure: &SureCfg,
    eq: Option<&EqCfg>,
    seed: u64,
) -> Result<SslTerms> {
    let s = sure_loss(f, y, a, sure, seed)?;
    let (eqv, lambda) = match eq {
        Some(cfg) => (eq_loss(f, &f.reconstruct(y)?, a, cfg)?, cfg.lambda),
        None => (0.0, 0.0),
    };
    Ok(SslTerms {
        sure_fidelity: s.fidelity,
        sure_penalty: s.penalty,
        divergence: s.divergence,
        eq: eqv,
        total: s.total() + lambda * eqv,
    })
}

fn check_finite(a: &Array3, what: &str) -> Result<()> {
    if a.all_finite() {
        Ok(())
    } else {
        Err(Error::Numeric(format!("non-finite {what}")))
    }
}

/// `SURE + lambda * EQ` for a model, with parameter gradients when
/// `want_grad`. The zoomed target is treated as a constant; pass
/// `fixed_target` to reuse one from an earlier evaluation.
#[allow(clippy::too_many_arguments)]
pub fn ssl_objective(
    params: &ModelParams,
    y: &Array3,
    a: &Degradation,
    sure: &SureCfg,
    eq: Option<&EqCfg>,
    seed: u64,
    fixed_target: Option<&Array3>,
    want_grad: bool,
) -> Result<SslEval> {
    sure.validate()?;
    let var = sure.variances(y.channels())?;
    let plane = y.plane_len();
    let mut grads = want_grad.then(|| params.zeros_like());
    let mut pieces = Vec::new();
    let mut pattern = Vec::new();

    let mut t0 = Tape::new(params);
    let out0 = network(&mut t0, y)?;
    let xhat = t0.value(&out0).clone();
    check_finite(&xhat, "reconstruction")?;
    let (hr, wr) = (xhat.rows(), xhat.cols());
    let ay = a.apply(&xhat)?;
    ay.ensure_same_shape(y, "A(f(y)) against y")?;
    let r = ay.zip_map(y, |p, q| p - q);
    let fidelity = r.sum_sq();
    pieces.extend(r.as_slice().iter().map(|v| v * v));
    pattern.extend(t0.relu_pattern());
    let mut seed0 = if want_grad { a.adjoint(&r.map(|v| 2.0 * v), hr, wr)? } else { Array3::zeros(0, 0, 0) };

    let trace: f64 = var.iter().map(|v| v * plane as f64).sum();
    let mut divergence = 0.0;
    if var.iter().any(|v| *v > 0.0) {
        let delta = sure.delta(y);
        let probes = sure.mc_probes;
        let c = 2.0 / (delta * probes as f64);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..probes {
            let b = draw_probe(&mut rng, y, sure.probe);
            let mut yp = y.clone();
            yp.scaled_add_assign(delta, &b);
            let mut tp = Tape::new(params);
            let outp = network(&mut tp, &yp)?;
            let xp = tp.value(&outp);
            check_finite(xp, "reconstruction at a probe")?;
            let ap = a.apply(xp)?;
            let mut wb = b;
            for (ch, v) in var.iter().enumerate() {
                wb.plane_mut(ch).iter_mut().for_each(|e| *e *= v);
            }
            divergence += wb.as_slice().iter().zip(ap.as_slice().iter().zip(ay.as_slice())).map(|(w, (p, q))| w * (p - q)).sum::<f64>()
                / delta;
            pieces.extend(wb.as_slice().iter().zip(ap.as_slice().iter().zip(ay.as_slice())).map(|(w, (p, q))| c * w * (p - q)));
            pattern.extend(tp.relu_pattern());
            if let Some(g) = grads.as_mut() {
                let mut adj = a.adjoint(&wb, hr, wr)?;
                adj.scale(c);
                tp.backward(outp, &adj, g)?;
                seed0.scaled_add_assign(-1.0, &adj);
            }
        }
        divergence /= probes as f64;
    }
    pieces.push(-trace);
    let penalty = -trace + 2.0 * divergence;

    let mut eqv = 0.0;
    let mut lambda = 0.0;
    let mut target_out = None;
    if let Some(cfg) = eq {
        cfg.validate()?;
        lambda = cfg.lambda;
        let target = match fixed_target {
            Some(t) => t.clone(),
            None => eq_target(&xhat, a, params.cfg.spatial_multiple(), cfg)?,
        };
        let ya = a.apply(&target)?;
        let mut te = Tape::new(params);
        let oute = network(&mut te, &ya)?;
        check_finite(te.value(&oute), "equivariance reconstruction")?;
        let (v, mut g, terms) = interior_residual(te.value(&oute), &target, cfg.margin)?;
        eqv = v;
        pieces.extend(terms.iter().map(|t| lambda * t));
        pattern.extend(te.relu_pattern());
        if let Some(gr) = grads.as_mut() {
            g.scale(lambda);
            te.backward(oute, &g, gr)?;
        }
        target_out = Some(target);
    }

    if let Some(g) = grads.as_mut() {
        t0.backward(out0, &seed0, g)?;
        if g.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("non-finite gradient".into()));
        }
    }
    let total = fidelity + penalty + lambda * eqv;
    if !total.is_finite() {
        return Err(Error::Numeric("non-finite objective".into()));
    }
    Ok(SslEval {
        terms: SslTerms {
            sure_fidelity: fidelity,
            sure_penalty: penalty,
            divergence,
            eq: eqv,
            total,
        },
        grads,
        pieces,
        pattern,
        target: target_out,
    })
}

/// Mean squared error against `x` with parameter gradients.
pub fn mse_grad(params: &ModelParams, y: &Array3, x: &Array3, want_grad: bool) -> Result<SslEval> {
    squared_error(params, y, x, want_grad, true)
}

/// Squared norm `||f(y) - x||^2` with parameter gradients.
pub fn sse_grad(params: &ModelParams, y: &Array3, x: &Array3, want_grad: bool) -> Result<SslEval> {
    squared_error(params, y, x, want_grad, false)
}

fn squared_error(params: &ModelParams, y: &Array3, x: &Array3, want_grad: bool, mean: bool) -> Result<SslEval> {
    let mut t = Tape::new(params);
    let out = network(&mut t, y)?;
    let xhat = t.value(&out);
    xhat.ensure_same_shape(x, "prediction against target")?;
    check_finite(xhat, "reconstruction")?;
    let n = if mean { x.len() as f64 } else { 1.0 };
    let d = xhat.zip_map(x, |p, q| p - q);
    let pieces: Vec<f64> = d.as_slice().iter().map(|v| v * v / n).collect();
    let loss: f64 = pieces.iter().sum();
    let grads = if want_grad {
        let mut g = params.zeros_like();
        t.backward(out, &d.map(|v| 2.0 * v / n), &mut g)?;
        Some(g)
    } else {
        None
    };
    Ok(SslEval {
        terms: SslTerms {
            total: loss,
            ..SslTerms::default()
        },
        grads,
        pieces,
        pattern: t.relu_pattern(),
        target: None,
    })
}
