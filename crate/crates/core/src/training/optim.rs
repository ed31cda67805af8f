use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Adaptive moment estimation with bias correction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    #[serde(skip)]
    pub m: Vec<Vec<f64>>,
    #[serde(skip)]
    pub v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(shapes: &[usize]) -> Adam {
        Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: shapes.iter().map(|n| vec![0.0; *n]).collect(),
            v: shapes.iter().map(|n| vec![0.0; *n]).collect(),
        }
    }

    pub fn update<'a>(
        &mut self,
        params: impl IntoIterator<Item = &'a mut Vec<f64>>,
        grads: &[Vec<f64>],
        lr: f64,
    ) -> Result<()> {
        let params: Vec<&mut Vec<f64>> = params.into_iter().collect();
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::Shape("optimizer state does not match the parameters".into()));
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for (((p, g), m), v) in params.into_iter().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            if p.len() != g.len() || p.len() != m.len() {
                return Err(Error::Shape("gradient length does not match its tensor".into()));
            }
            for i in 0..p.len() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
                let mh = m[i] / c1;
                let vh = v[i] / c2;
                p[i] -= lr * mh / (vh.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}

/// Multiplies the learning rate by `factor` once the validation loss has
/// failed to improve (relative `threshold`) for `patience` epochs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Plateau {
    pub lr: f64,
    pub factor: f64,
    pub patience: usize,
    pub threshold: f64,
    pub min_lr: f64,
    #[serde(with = "infinite_as_null")]
    pub best: f64,
    pub bad_epochs: usize,
    /// Triggers that found the rate already at `min_lr`.
    pub stalled: usize,
}

impl Plateau {
    pub fn new(lr: f64, factor: f64, patience: usize, threshold: f64, min_lr: f64) -> Result<Plateau> {
        if !(lr > 0.0) {
            return Err(Error::config("train.lr0", "must be positive"));
        }
        if !(factor > 0.0 && factor < 1.0) {
            return Err(Error::config("train.plateau_factor", "must lie in (0, 1)"));
        }
        if patience == 0 {
            return Err(Error::config("train.plateau_patience", "must be at least 1"));
        }
        Ok(Plateau {
            lr,
            factor,
            patience,
            threshold,
            min_lr,
            best: f64::INFINITY,
            bad_epochs: 0,
            stalled: 0,
        })
    }

    /// Records one validation loss; returns true when it is a new best.
    pub fn observe(&mut self, val: f64) -> bool {
        let improved = if self.best.is_finite() {
            val < self.best - self.threshold * self.best.abs()
        } else {
            val.is_finite()
        };
        if improved {
            self.best = val;
            self.bad_epochs = 0;
            return true;
        }
        self.bad_epochs += 1;
        if self.bad_epochs >= self.patience {
            self.bad_epochs = 0;
            let next = self.lr * self.factor;
            if next < self.min_lr * (1.0 - 1e-9) {
                self.stalled += 1;
                self.lr = self.min_lr;
            } else {
                self.lr = next;
            }
        }
        false
    }

    pub fn exhausted(&self) -> bool {
        self.stalled >= 2
    }
}

mod infinite_as_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_some(v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}
