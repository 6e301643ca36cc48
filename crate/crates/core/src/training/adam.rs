use serde::{Deserialize, Serialize};

use crate::error::{input, Result};
use crate::model::ParameterVector;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamHyper {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamHyper {
    fn default() -> Self {
        AdamHyper {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moment estimates, one entry per parameter.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
}

impl AdamState {
    pub fn new(n: usize) -> Self {
        AdamState {
            m: vec![0.0; n],
            v: vec![0.0; n],
            step: 0,
        }
    }
}

/// One bias-corrected Adam update. `grad` has the full parameter length;
/// frozen entries keep both their value and their moments.
pub fn adam_step(
    params: &mut ParameterVector,
    grad: &[f64],
    state: &mut AdamState,
    hp: &AdamHyper,
) -> Result<()> {
    let n = params.len();
    if grad.len() != n || state.m.len() != n || state.v.len() != n {
        return input(format!(
            "adam: gradient has {} entries, parameters {n}, state {}",
            grad.len(),
            state.m.len()
        ));
    }
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - hp.beta1.powi(t);
    let c2 = 1.0 - hp.beta2.powi(t);
    for i in 0..n {
        if !params.trainable[i] {
            continue;
        }
        let g = grad[i];
        state.m[i] = hp.beta1 * state.m[i] + (1.0 - hp.beta1) * g;
        state.v[i] = hp.beta2 * state.v[i] + (1.0 - hp.beta2) * g * g;
        let mhat = state.m[i] / c1;
        let vhat = state.v[i] / c2;
        params.values[i] -= hp.learning_rate * mhat / (vhat.sqrt() + hp.eps);
    }
    Ok(())
}
