//! AdamW with decoupled weight decay.

use alloc::vec;
use alloc::vec::Vec;

use crate::encoder::{DualEncoderModel, LinearEncoder, Tower, TowerGrad};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamWConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        AdamWConfig { lr: 1e-2, beta1: 0.9, beta2: 0.999, eps: 1e-8, weight_decay: 0.01 }
    }
}

/// First and second moments of one parameter tensor, with its own step count.
#[derive(Debug, Clone, PartialEq)]
pub struct Moments {
    pub step: u64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

impl Moments {
    pub fn zeros(len: usize) -> Self {
        Moments { step: 0, m: vec![0.0; len], v: vec![0.0; len] }
    }

    /// One AdamW update of `params` in place:
    ///
    /// ```text
    /// w ← w − lr·λ·w
    /// m ← β1·m + (1−β1)·g,   v ← β2·v + (1−β2)·g²
    /// w ← w − lr · (m / (1−β1^t)) / (sqrt(v / (1−β2^t)) + ε)
    /// ```
    pub fn update(&mut self, cfg: &AdamWConfig, params: &mut [f64], grads: &[f64]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::DimensionMismatch { expected: self.m.len(), found: grads.len() });
        }
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - libm::pow(cfg.beta1, t as f64);
        let bc2 = 1.0 - libm::pow(cfg.beta2, t as f64);
        let decay = 1.0 - cfg.lr * cfg.weight_decay;
        for (((w, g), m), v) in params.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            *w *= decay;
            *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
            *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
            let mhat = *m / bc1;
            let vhat = *v / bc2;
            *w -= cfg.lr * mhat / (libm::sqrt(vhat) + cfg.eps);
        }
        Ok(())
    }
}

/// Optimizer state for both towers.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamWState {
    pub query: Moments,
    pub passage: Moments,
}

impl AdamWState {
    pub fn new(model: &DualEncoderModel) -> Self {
        AdamWState {
            query: Moments::zeros(model.query.weights().len()),
            passage: Moments::zeros(model.passage.weights().len()),
        }
    }

    pub fn moments(&self, t: Tower) -> &Moments {
        match t {
            Tower::Query => &self.query,
            Tower::Passage => &self.passage,
        }
    }

    pub fn is_finite(&self) -> bool {
        [&self.query, &self.passage]
            .iter()
            .all(|s| s.m.iter().chain(&s.v).all(|x| x.is_finite()))
    }
}

/// Applies one update to `tower` unless `grad` received no contribution this
/// step; a tower outside the step's computation graph is left untouched,
/// weight decay included.
pub fn apply(
    cfg: &AdamWConfig,
    moments: &mut Moments,
    tower: &mut LinearEncoder,
    grad: &TowerGrad,
) -> Result<bool> {
    if !grad.is_touched() {
        return Ok(false);
    }
    moments.update(cfg, tower.weights_mut(), grad.as_slice())?;
    Ok(true)
}
