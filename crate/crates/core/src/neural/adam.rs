use alloc::vec;
use alloc::vec::Vec;

use crate::error::{invalid, Result};
use crate::math::sqrt;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Moment accumulators. `beta*_pow` track `βᵗ` so no `powi` is needed.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
    beta1_pow: f64,
    beta2_pow: f64,
}

impl AdamState {
    pub fn new(n_params: usize) -> Self {
        Self {
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            step: 0,
            beta1_pow: 1.0,
            beta2_pow: 1.0,
        }
    }

    pub fn len(&self) -> usize {
        self.m.len()
    }

    pub fn is_empty(&self) -> bool {
        self.m.is_empty()
    }
}

/// One bias-corrected Adam update, in place.
pub fn adam_step(params: &mut [f64], grads: &[f64], state: &mut AdamState, lr: f64, cfg: &AdamConfig) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.len() {
        return Err(invalid!(
            "adam_step shape mismatch: {} params, {} grads, state {}",
            params.len(),
            grads.len(),
            state.len()
        ));
    }
    state.step += 1;
    state.beta1_pow *= cfg.beta1;
    state.beta2_pow *= cfg.beta2;
    let c1 = 1.0 - state.beta1_pow;
    let c2 = 1.0 - state.beta2_pow;
    for i in 0..params.len() {
        let g = grads[i];
        let m = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g;
        let v = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * g * g;
        state.m[i] = m;
        state.v[i] = v;
        params[i] -= lr * (m / c1) / (sqrt(v / c2) + cfg.epsilon);
    }
    Ok(())
}
