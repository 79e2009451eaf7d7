// SPDX-License-Identifier: MIT OR Apache-2.0

//! Multinomial logistic probe over residual activations.

use serde::{Deserialize, Serialize};

use super::{Result, SteerError};
use crate::numkern::{argmax, softmax_in_place, AdamConfig, OptimState, Tensor};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeConfig {
    pub lr: f64,
    pub max_steps: usize,
    /// Stop once the full-batch loss falls below this.
    pub tol: f64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        ProbeConfig {
            lr: 1e-2,
            max_steps: 2000,
            tol: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeParams {
    /// Row `r` is the direction of relation `r`.
    pub w: Vec<Vec<f64>>,
    pub b: Vec<f64>,
    pub train_accuracy: f64,
    pub final_loss: f64,
    pub steps: usize,
}

impl ProbeParams {
    pub fn n_rel(&self) -> usize {
        self.w.len()
    }

    pub fn logits(&self, h: &[f64]) -> Vec<f64> {
        (0..self.n_rel())
            .map(|r| self.b[r] + self.w[r].iter().zip(h).map(|(w, x)| w * x).sum::<f64>())
            .collect()
    }

    pub fn predict(&self, h: &[f64]) -> usize {
        argmax(&self.logits(h))
    }
}

/// Full-batch Adam on mean cross-entropy from a zero start, so the result
/// depends only on the multiset of examples.
pub fn probe_train(rows: &[Vec<f64>], labels: &[usize], n_rel: usize, config: &ProbeConfig) -> Result<ProbeParams> {
    if rows.is_empty() || rows.len() != labels.len() {
        return Err(SteerError::Probe("need one label per activation".into()));
    }
    if labels.iter().any(|&l| l >= n_rel) {
        return Err(SteerError::Probe(format!("label outside 0..{n_rel}")));
    }
    let first = labels[0];
    if labels.iter().all(|&l| l == first) {
        return Err(SteerError::Probe("only one class present".into()));
    }
    let d = rows[0].len();
    if d == 0 || rows.iter().any(|r| r.len() != d) {
        return Err(SteerError::Probe("ragged activations".into()));
    }
    let n = rows.len() as f64;
    let mut params = vec![Tensor::zeros(&[n_rel, d]), Tensor::zeros(&[n_rel])];
    let mut opt = OptimState::new(
        &params,
        AdamConfig {
            lr: config.lr,
            ..AdamConfig::default()
        },
    );
    let mut loss = f64::INFINITY;
    let mut steps = 0;
    let mut p = vec![0.0; n_rel];
    while steps < config.max_steps {
        let mut gw = vec![0.0; n_rel * d];
        let mut gb = vec![0.0; n_rel];
        let mut total = 0.0;
        for (h, &y) in rows.iter().zip(labels) {
            for (r, pr) in p.iter_mut().enumerate() {
                *pr = params[1].data()[r] + params[0].row(r).iter().zip(h).map(|(w, x)| w * x).sum::<f64>();
            }
            softmax_in_place(&mut p);
            total -= p[y].max(1e-300).ln();
            for r in 0..n_rel {
                let g = (p[r] - if r == y { 1.0 } else { 0.0 }) / n;
                gb[r] += g;
                for (k, x) in h.iter().enumerate() {
                    gw[r * d + k] += g * x;
                }
            }
        }
        loss = total / n;
        if loss < config.tol {
            break;
        }
        let grads = [Tensor::matrix(n_rel, d, gw)?, Tensor::vector(gb)?];
        opt.step(&mut params, &grads)?;
        steps += 1;
    }
    let b = params.pop().map(Tensor::into_vec).unwrap_or_default();
    let w = params
        .pop()
        .map(|t| t.data().chunks(d).map(<[f64]>::to_vec).collect())
        .unwrap_or_default();
    let mut probe = ProbeParams {
        w,
        b,
        train_accuracy: 0.0,
        final_loss: loss,
        steps,
    };
    let hits = rows.iter().zip(labels).filter(|(h, &y)| probe.predict(h) == y).count();
    probe.train_accuracy = hits as f64 / n;
    Ok(probe)
}

pub(crate) fn probe_delta(probe: &ProbeParams, alpha: f64, input: usize, target: usize) -> Result<Vec<f64>> {
    let r = probe.n_rel();
    if input >= r || target >= r {
        return Err(SteerError::Probe(format!("relation outside 0..{r}")));
    }
    Ok(probe.w[input]
        .iter()
        .zip(&probe.w[target])
        .map(|(wi, wt)| alpha * wt - alpha * wi)
        .collect())
}

/// `h′ = h − α w_input + α w_target`.
pub fn probe_swap(h: &[f64], probe: &ProbeParams, alpha: f64, input: usize, target: usize) -> Result<Vec<f64>> {
    let delta = probe_delta(probe, alpha, input, target)?;
    Ok(h.iter().zip(&delta).map(|(x, d)| x + d).collect())
}
