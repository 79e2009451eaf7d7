// SPDX-License-Identifier: MIT OR Apache-2.0

//! AdamW with bias correction and decoupled weight decay.

use serde::{Deserialize, Serialize};

use super::{NumError, Result, Tensor};

/// Hyperparameters shared by every parameter group.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
        }
    }
}

/// Moment estimates for a list of parameters.
#[derive(Debug, Clone)]
pub struct OptimState {
    pub step: u64,
    pub config: AdamConfig,
    first_moment: Vec<Vec<f64>>,
    second_moment: Vec<Vec<f64>>,
}

impl OptimState {
    /// Zero moments shaped like `params`.
    pub fn new(params: &[Tensor], config: AdamConfig) -> Self {
        Self {
            step: 0,
            config,
            first_moment: params.iter().map(|p| vec![0.0; p.len()]).collect(),
            second_moment: params.iter().map(|p| vec![0.0; p.len()]).collect(),
        }
    }

    /// One update at the configured learning rate.
    pub fn step(&mut self, params: &mut [Tensor], grads: &[Tensor]) -> Result<()> {
        let lr = self.config.lr;
        self.step_with_lr(params, grads, lr)
    }

    /// One update with an explicit learning rate (for schedules).
    pub fn step_with_lr(&mut self, params: &mut [Tensor], grads: &[Tensor], lr: f64) -> Result<()> {
        self.step_masked(params, grads, lr, None)
    }

    /// Like [`OptimState::step_with_lr`]; `decay_mask`, when given, selects
    /// which parameters receive weight decay.
    pub fn step_masked(&mut self, params: &mut [Tensor], grads: &[Tensor], lr: f64, decay_mask: Option<&[bool]>) -> Result<()> {
        if params.len() != grads.len() || params.len() != self.first_moment.len() {
            return Err(NumError::shape(
                "optimizer_step",
                &[params.len()],
                &[grads.len(), self.first_moment.len()],
                "parameter, gradient and state counts differ",
            ));
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.shape() != g.shape() || p.len() != self.first_moment[i].len() {
                return Err(NumError::shape(
                    "optimizer_step",
                    p.shape(),
                    g.shape(),
                    "parameter and gradient shapes differ",
                ));
            }
        }
        self.step += 1;
        let AdamConfig {
            beta1,
            beta2,
            eps,
            weight_decay,
            ..
        } = self.config;
        let t = self.step as i32;
        let bc1 = 1.0 - beta1.powi(t);
        let bc2 = 1.0 - beta2.powi(t);
        for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            let wd = if decay_mask.map_or(true, |m| m[i]) { weight_decay } else { 0.0 };
            let m = &mut self.first_moment[i];
            let v = &mut self.second_moment[i];
            let pd = p.data_mut();
            for (((w, &gr), mi), vi) in pd.iter_mut().zip(g.data()).zip(m.iter_mut()).zip(v.iter_mut()) {
                *mi = beta1 * *mi + (1.0 - beta1) * gr;
                *vi = beta2 * *vi + (1.0 - beta2) * gr * gr;
                let mhat = *mi / bc1;
                let vhat = *vi / bc2;
                *w -= lr * (mhat / (vhat.sqrt() + eps) + wd * *w);
            }
        }
        Ok(())
    }
}

/// Scales `grads` in place so their joint L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_grad_norm(grads: &mut [Tensor], max_norm: f64) -> f64 {
    let norm = grads.iter().flat_map(|g| g.data().iter()).map(|v| v * v).sum::<f64>().sqrt();
    if norm > max_norm && norm > 0.0 {
        let s = max_norm / norm;
        for g in grads.iter_mut() {
            for v in g.data_mut() {
                *v *= s;
            }
        }
    }
    norm
}
