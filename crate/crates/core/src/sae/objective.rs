// SPDX-License-Identifier: MIT OR Apache-2.0

//! The five-term objective as a differentiable graph.

use serde::{Deserialize, Serialize};

use super::{Result, SAEParams, SaeError, B_D, B_E, N_CORE, V_B1, V_W1, W_D, W_E};
use crate::numkern::{Graph, Tensor, Var};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub recon: f64,
    pub sparse: f64,
    pub align: f64,
    pub ortho: f64,
    pub value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossTerms {
    pub recon: f64,
    pub sparse: f64,
    pub align: f64,
    pub ortho: f64,
    pub value: f64,
    pub total: f64,
}

/// A built objective: the graph, parameter leaves, per-term nodes, and the
/// code `z` for the batch.
pub struct LossGraph {
    pub graph: Graph,
    /// One leaf per entry of [`SAEParams::tensors`]; `None` when that
    /// tensor does not enter the objective.
    pub leaves: Vec<Option<Var>>,
    pub recon: Var,
    pub sparse: Var,
    pub align: Option<Var>,
    pub ortho: Option<Var>,
    pub value: Option<Var>,
    pub total: Var,
    pub z: Var,
}

impl LossGraph {
    pub fn terms(&self) -> LossTerms {
        let v = |x: Var| self.graph.value(x).data()[0];
        LossTerms {
            recon: v(self.recon),
            sparse: v(self.sparse),
            align: self.align.map(v).unwrap_or(0.0),
            ortho: self.ortho.map(v).unwrap_or(0.0),
            value: self.value.map(v).unwrap_or(0.0),
            total: v(self.total),
        }
    }
}

/// Build the objective on a batch `h [B, d]` with optional relation and
/// first-answer-token labels.
///
/// Terms whose weight is zero are still evaluated (so the trace reports
/// them) when labels are present, but never when labels are missing; a
/// positive weight without labels is an error. Value heads only enter the
/// graph when `weights.value > 0`.
pub fn loss_graph(
    params: &SAEParams,
    h: &Tensor,
    relations: Option<&[usize]>,
    answer_tokens: Option<&[usize]>,
    weights: &LossWeights,
) -> Result<LossGraph> {
    let cfg = &params.config;
    let (b, d) = (h.rows(), h.cols());
    if d != cfg.d {
        return Err(SaeError::Dim { got: d, expected: cfg.d });
    }
    if weights.align > 0.0 && relations.is_none() {
        return Err(SaeError::MissingLabels("relation"));
    }
    if weights.value > 0.0 && (relations.is_none() || answer_tokens.is_none()) {
        return Err(SaeError::MissingLabels("answer-token"));
    }
    for labels in [relations, answer_tokens].into_iter().flatten() {
        if labels.len() != b {
            return Err(SaeError::Config(format!("{} labels for a batch of {b}", labels.len())));
        }
    }
    if let Some(rs) = relations {
        if let Some(&r) = rs.iter().find(|&&r| r >= cfg.n_rel) {
            return Err(SaeError::Config(format!("relation label {r} out of range")));
        }
    }
    let (k, r_n) = (cfg.n_free, cfg.n_rel);
    let c = k + r_n;

    let mut g = Graph::new();
    let mut leaves = vec![None; params.tensors.len()];
    for i in [W_E, B_E, W_D, B_D] {
        leaves[i] = Some(g.param(params.tensors[i].clone()));
    }
    let [w_e, b_e, w_d, b_d] = [W_E, B_E, W_D, B_D].map(|i| leaves[i].expect("core leaf"));
    let x = g.constant(h.clone());
    let pre = g.matmul(x, w_e)?;
    let pre = g.add_row(pre, b_e)?;
    let z = g.relu(pre)?;
    let hhat = g.matmul(z, w_d)?;
    let hhat = g.add_row(hhat, b_d)?;

    // Mean over batch and dims.
    let recon = g.mse(hhat, x)?;

    let sparse = if cfg.sparse_full_code {
        let s = g.l1(z)?;
        g.scale(s, 1.0 / (b * c) as f64)?
    } else if k > 0 {
        let zf = g.slice_cols(z, 0, k)?;
        let s = g.l1(zf)?;
        g.scale(s, 1.0 / (b * k) as f64)?
    } else {
        g.constant(Tensor::scalar(0.0))
    };

    let z_rel = g.slice_cols(z, k, c)?;
    let align = match relations {
        Some(rs) => {
            let targets: Vec<Option<usize>> = rs.iter().map(|&r| Some(r)).collect();
            Some(g.cross_entropy(z_rel, &targets)?)
        }
        None => None,
    };

    // Cross-covariance between slots and free features, 1/B normalisation.
    let ortho = if b >= 2 && k > 0 {
        let zf = g.slice_cols(z, 0, k)?;
        let cf = g.center_cols(zf)?;
        let cr = g.center_cols(z_rel)?;
        let crt = g.transpose(cr)?;
        let cov = g.matmul(crt, cf)?;
        let cov = g.scale(cov, 1.0 / b as f64)?;
        Some(g.sum_squares(cov)?)
    } else {
        Some(g.constant(Tensor::scalar(0.0)))
    };

    let value = match (relations, answer_tokens) {
        (Some(rs), Some(ts)) if weights.value > 0.0 => {
            if let Some(&t) = ts.iter().find(|&&t| t >= cfg.vocab_size) {
                return Err(SaeError::Config(format!("answer token {t} outside value-head vocab")));
            }
            Some(value_term(&mut g, params, &mut leaves, z, rs, ts)?)
        }
        _ => None,
    };

    let mut total = g.scale(recon, weights.recon)?;
    let s = g.scale(sparse, weights.sparse)?;
    total = g.add(total, s)?;
    for (term, w) in [(align, weights.align), (ortho, weights.ortho), (value, weights.value)] {
        if let (Some(t), true) = (term, w > 0.0) {
            let s = g.scale(t, w)?;
            total = g.add(total, s)?;
        }
    }
    Ok(LossGraph {
        graph: g,
        leaves,
        recon,
        sparse,
        align,
        ortho,
        value,
        total,
        z,
    })
}

/// Batch mean of CE(head_{r_b}(z[K + r_b]), t_b). Examples are grouped by
/// relation; each group's mean CE is weighted by its share of the batch.
fn value_term(g: &mut Graph, params: &SAEParams, leaves: &mut [Option<Var>], z: Var, rs: &[usize], ts: &[usize]) -> Result<Var> {
    let cfg = &params.config;
    let (b, h) = (rs.len(), cfg.value_hidden);
    let w1 = g.param(params.tensors[V_W1].clone());
    let b1 = g.param(params.tensors[V_B1].clone());
    leaves[V_W1] = Some(w1);
    leaves[V_B1] = Some(b1);
    let cols: Vec<usize> = rs.iter().map(|&r| cfg.n_free + r).collect();
    let s = g.gather_cols(z, &cols)?; // [B, 1]
    let ones = g.constant(Tensor::full(&[1, h], 1.0));
    let s_wide = g.matmul(s, ones)?; // [B, H]
    let w1_rows = g.index_rows(w1, rs)?;
    let b1_rows = g.index_rows(b1, rs)?;
    let hid = g.mul(s_wide, w1_rows)?;
    let hid = g.add(hid, b1_rows)?;
    let hid = g.relu(hid)?;
    let mut acc: Option<Var> = None;
    for r in 0..cfg.n_rel {
        let idx: Vec<usize> = (0..b).filter(|&i| rs[i] == r).collect();
        if idx.is_empty() {
            continue;
        }
        let w2 = g.param(params.tensors[N_CORE + 2 + 2 * r].clone());
        let b2 = g.param(params.tensors[N_CORE + 3 + 2 * r].clone());
        leaves[N_CORE + 2 + 2 * r] = Some(w2);
        leaves[N_CORE + 3 + 2 * r] = Some(b2);
        let rows = g.index_rows(hid, &idx)?;
        let logits = g.matmul(rows, w2)?;
        let logits = g.add_row(logits, b2)?;
        let targets: Vec<Option<usize>> = idx.iter().map(|&i| Some(ts[i])).collect();
        let ce = g.cross_entropy(logits, &targets)?;
        let ce = g.scale(ce, idx.len() as f64 / b as f64)?;
        acc = Some(match acc {
            Some(a) => g.add(a, ce)?,
            None => ce,
        });
    }
    Ok(acc.expect("non-empty batch"))
}

/// Evaluate every term without building gradients for later use.
pub fn loss_terms(
    params: &SAEParams,
    h: &Tensor,
    relations: Option<&[usize]>,
    answer_tokens: Option<&[usize]>,
    weights: &LossWeights,
) -> Result<LossTerms> {
    Ok(loss_graph(params, h, relations, answer_tokens, weights)?.terms())
}
