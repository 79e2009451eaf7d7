// SPDX-License-Identifier: MIT OR Apache-2.0

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::objective::{loss_graph, LossTerms, LossWeights};
use super::{Result, SAEConfig, SAEParams, SaeError, N_CORE};
use crate::numkern::{argmax, AdamConfig, OptimState, Tensor};
use crate::rng::stream_rng;

/// Activations with optional labels, one row per example.
#[derive(Debug, Clone, PartialEq)]
pub struct SaeData {
    pub h: Tensor,
    pub relations: Option<Vec<usize>>,
    pub answer_tokens: Option<Vec<usize>>,
}

impl SaeData {
    pub fn new(rows: &[Vec<f64>], relations: Option<Vec<usize>>, answer_tokens: Option<Vec<usize>>) -> Result<Self> {
        if rows.is_empty() {
            return Err(SaeError::Config("no activations".into()));
        }
        let h = Tensor::from_rows(rows)?;
        for l in [&relations, &answer_tokens].into_iter().flatten() {
            if l.len() != rows.len() {
                return Err(SaeError::Config("one label per activation".into()));
            }
        }
        Ok(SaeData {
            h,
            relations,
            answer_tokens,
        })
    }

    pub fn len(&self) -> usize {
        self.h.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn batch(&self, idx: &[usize]) -> Result<(Tensor, Option<Vec<usize>>, Option<Vec<usize>>)> {
        let d = self.h.cols();
        let mut data = Vec::with_capacity(idx.len() * d);
        for &i in idx {
            data.extend_from_slice(self.h.row(i));
        }
        let pick = |v: &Option<Vec<usize>>| v.as_ref().map(|v| idx.iter().map(|&i| v[i]).collect());
        Ok((
            Tensor::matrix(idx.len(), d, data)?,
            pick(&self.relations),
            pick(&self.answer_tokens),
        ))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochTrace {
    pub stage: u8,
    pub epoch: usize,
    /// Batch means of each term.
    pub terms: LossTerms,
    /// Fraction of examples whose top slot matched the label, measured on
    /// the pre-update codes seen during the epoch.
    pub binding_accuracy: Option<f64>,
}

fn run_stage(params: &mut SAEParams, data: &SaeData, weights: &LossWeights, epochs: usize, stage: u8) -> Result<Vec<EpochTrace>> {
    let cfg = params.config.clone();
    if data.is_empty() {
        return Err(SaeError::Config("no activations".into()));
    }
    if data.h.cols() != cfg.d {
        return Err(SaeError::Dim {
            got: data.h.cols(),
            expected: cfg.d,
        });
    }
    // Stage 1 only touches the autoencoder itself.
    let n_opt = if stage == 1 { N_CORE } else { params.tensors.len() };
    let mut opt = OptimState::new(
        &params.tensors[..n_opt],
        AdamConfig {
            lr: cfg.lr,
            ..AdamConfig::default()
        },
    );
    let mut rng = stream_rng(cfg.seed, if stage == 1 { "sae/stage1" } else { "sae/stage2" });
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut trace = Vec::with_capacity(epochs);
    let (k, c) = (cfg.n_free, cfg.code_dim());
    for epoch in 0..epochs {
        order.shuffle(&mut rng);
        let mut sums = LossTerms::default();
        let mut n_batches = 0usize;
        let mut hits = 0usize;
        for idx in order.chunks(cfg.batch_size) {
            let (h, rs, ts) = data.batch(idx)?;
            let rs_for_loss = if stage == 1 { None } else { rs.as_deref() };
            let ts_for_loss = if stage == 1 { None } else { ts.as_deref() };
            let mut lg = loss_graph(params, &h, rs_for_loss, ts_for_loss, weights)?;
            let t = lg.terms();
            if !t.total.is_finite() {
                return Err(SaeError::Divergence { stage, epoch });
            }
            if let Some(rs) = &rs {
                let z = lg.graph.value(lg.z);
                for (i, &r) in rs.iter().enumerate() {
                    let slots = &z.row(i)[k..c];
                    if argmax(slots) == r {
                        hits += 1;
                    }
                }
            }
            let grads = lg.graph.backward(lg.total)?;
            let gs: Vec<Tensor> = (0..n_opt)
                .map(|i| match lg.leaves[i] {
                    Some(v) => grads.get_or_zeros(v, &params.tensors[i]),
                    None => Tensor::zeros(params.tensors[i].shape()),
                })
                .collect();
            opt.step(&mut params.tensors[..n_opt], &gs)?;
            sums.recon += t.recon;
            sums.sparse += t.sparse;
            sums.align += t.align;
            sums.ortho += t.ortho;
            sums.value += t.value;
            sums.total += t.total;
            n_batches += 1;
        }
        let nb = n_batches as f64;
        trace.push(EpochTrace {
            stage,
            epoch,
            terms: LossTerms {
                recon: sums.recon / nb,
                sparse: sums.sparse / nb,
                align: sums.align / nb,
                ortho: sums.ortho / nb,
                value: sums.value / nb,
                total: sums.total / nb,
            },
            binding_accuracy: data.relations.as_ref().map(|_| hits as f64 / data.len() as f64),
        });
    }
    Ok(trace)
}

/// Reconstruction and sparsity only; value heads are left untouched.
pub fn train_stage1(params: &mut SAEParams, data: &SaeData) -> Result<Vec<EpochTrace>> {
    let w = params.config.stage1_weights();
    let epochs = params.config.stage1_epochs;
    run_stage(params, data, &w, epochs, 1)
}

/// Full objective with the configured ablation applied.
pub fn train_stage2(params: &mut SAEParams, data: &SaeData) -> Result<Vec<EpochTrace>> {
    let w = params.config.stage2_weights();
    if w.align > 0.0 && data.relations.is_none() {
        return Err(SaeError::MissingLabels("relation"));
    }
    if w.value > 0.0 && data.answer_tokens.is_none() {
        return Err(SaeError::MissingLabels("answer-token"));
    }
    let epochs = params.config.stage2_epochs;
    run_stage(params, data, &w, epochs, 2)
}

/// Initialise, then run both stages (stage 1 skipped under the `stage1`
/// ablation). Parameters are rounded to f32 at the end.
pub fn train_sae(config: &SAEConfig, data: &SaeData) -> Result<(SAEParams, Vec<EpochTrace>)> {
    let mut params = SAEParams::init(config)?;
    let mut trace = Vec::new();
    if config.effective_stage1_epochs() > 0 {
        trace.extend(train_stage1(&mut params, data)?);
    }
    if config.stage2_epochs > 0 {
        trace.extend(train_stage2(&mut params, data)?);
    }
    params.round_to_f32();
    Ok((params, trace))
}
