use crate::error::{FateError, Result};
use crate::tensor::Tensor;

/// `d_model^-0.5 · min(step^-0.5, step · warmup^-1.5)`
pub fn lr_schedule(step: usize, d_model: usize, warmup: usize) -> Result<f64> {
    if step < 1 {
        return Err(FateError::contract("learning-rate schedule starts at step 1"));
    }
    if d_model == 0 || warmup == 0 {
        return Err(FateError::contract("d_model and warmup must be positive"));
    }
    let s = step as f64;
    Ok((d_model as f64).powf(-0.5) * s.powf(-0.5).min(s * (warmup as f64).powf(-1.5)))
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
    pub t: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(weights: &[&Tensor]) -> Self {
        let zeros = || {
            weights
                .iter()
                .map(|w| Tensor::zeros(w.shape()).expect("weight shapes are positive"))
                .collect()
        };
        Self {
            m: zeros(),
            v: zeros(),
            t: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Bias-corrected Adam update, in place.
pub fn adam_step(weights: &mut [&mut Tensor], grads: &[Tensor], state: &mut AdamState, lr: f64) -> Result<()> {
    if weights.len() != grads.len() || weights.len() != state.m.len() {
        return Err(FateError::contract(format!(
            "adam: {} weights, {} gradients, {} moments",
            weights.len(),
            grads.len(),
            state.m.len()
        )));
    }
    for ((w, g), m) in weights.iter().zip(grads).zip(&state.m) {
        if w.shape() != g.shape() || w.shape() != m.shape() {
            return Err(FateError::shape("adam_step", w.shape(), g.shape()));
        }
    }
    state.t += 1;
    let (b1, b2, eps) = (state.beta1, state.beta2, state.eps);
    let c1 = 1.0 - b1.powi(state.t as i32);
    let c2 = 1.0 - b2.powi(state.t as i32);
    for (((w, g), m), v) in weights.iter_mut().zip(grads).zip(&mut state.m).zip(&mut state.v) {
        let (w, m, v) = (w.data_mut(), m.data_mut(), v.data_mut());
        for i in 0..w.len() {
            let gi = g.data()[i];
            m[i] = b1 * m[i] + (1.0 - b1) * gi;
            v[i] = b2 * v[i] + (1.0 - b2) * gi * gi;
            w[i] -= lr * (m[i] / c1) / ((v[i] / c2).sqrt() + eps);
        }
    }
    Ok(())
}
