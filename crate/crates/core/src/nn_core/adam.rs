use serde::{Deserialize, Serialize};

use super::{ParamMut, Real};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First/second moment estimates, one flat buffer per parameter.
#[derive(Debug, Clone)]
pub struct AdamState<F> {
    pub config: AdamConfig,
    pub step: u64,
    pub m: Vec<Vec<F>>,
    pub v: Vec<Vec<F>>,
}

impl<F: Real> AdamState<F> {
    pub fn new(config: AdamConfig) -> Self {
        Self {
            config,
            step: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }
}

/// One bias-corrected Adam update over `params` using their accumulated gradients.
///
/// Gradients are checked for non-finite entries before anything is modified; the
/// error names the offending parameter.
pub fn adam_step<F: Real>(params: &mut [ParamMut<'_, F>], state: &mut AdamState<F>) -> Result<()> {
    if let Some(p) = params.iter().find(|p| p.grad.iter().any(|g| !g.is_finite())) {
        return Err(Error::NonFinite(format!("gradient of {}", p.name)));
    }
    if state.m.is_empty() {
        state.m = params.iter().map(|p| vec![F::zero(); p.value.len()]).collect();
        state.v = state.m.clone();
    }
    if state.m.len() != params.len()
        || state.m.iter().zip(params.iter()).any(|(m, p)| m.len() != p.value.len())
    {
        return Err(Error::shape("optimizer state does not match parameters"));
    }
    state.step += 1;
    let c = state.config;
    let t = state.step as i32;
    let b1 = F::of(c.beta1);
    let b2 = F::of(c.beta2);
    let one = F::one();
    let corr1 = F::of(1.0 - c.beta1.powi(t));
    let corr2 = F::of(1.0 - c.beta2.powi(t));
    let lr = F::of(c.lr);
    let eps = F::of(c.eps);
    for ((p, m), v) in params.iter_mut().zip(&mut state.m).zip(&mut state.v) {
        for i in 0..p.value.len() {
            let g = p.grad[i];
            m[i] = b1 * m[i] + (one - b1) * g;
            v[i] = b2 * v[i] + (one - b2) * g * g;
            let mhat = m[i] / corr1;
            let vhat = v[i] / corr2;
            p.value[i] -= lr * mhat / (vhat.sqrt() + eps);
        }
    }
    Ok(())
}
