//! ADAM optimizer over [`StgnnParams`](super::StgnnParams).

use serde::{Deserialize, Serialize};

use super::{Gradients, StgnnParams};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    step: u64,
}

impl AdamState {
    pub fn new(params: &StgnnParams) -> Self {
        let zeros = Gradients::zeros_like(params).layers;
        Self {
            m: zeros.clone(),
            v: zeros,
            step: 0,
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }
}

/// One bias-corrected ADAM update in place.
pub fn adam_step(params: &mut StgnnParams, state: &mut AdamState, grads: &Gradients, cfg: &AdamConfig) -> Result<()> {
    if grads.layers.len() != params.layers.len()
        || grads.layers.iter().zip(&params.layers).any(|(g, l)| g.len() != l.taps.len())
    {
        return Err(Error::Dimension("gradient layout does not match parameters".into()));
    }
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - cfg.beta1.powi(t);
    let c2 = 1.0 - cfg.beta2.powi(t);
    for (l, layer) in params.layers.iter_mut().enumerate() {
        for (i, h) in layer.taps.iter_mut().enumerate() {
            let g = grads.layers[l][i];
            let m = &mut state.m[l][i];
            let v = &mut state.v[l][i];
            *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
            *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *h -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.eps);
        }
    }
    Ok(())
}
