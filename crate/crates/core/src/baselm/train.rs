// SPDX-License-Identifier: MIT OR Apache-2.0

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::model::{forward, head, pack, LMConfig, LMParams};
use super::{LmError, Result};
use crate::numkern::{clip_grad_norm, AdamConfig, Graph, OptimState, Var};
use crate::rng::stream_rng;

/// Token sequence with next-token loss on positions predicting
/// `tokens[loss_from..]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LmSequence {
    pub tokens: Vec<usize>,
    pub loss_from: usize,
}

impl LmSequence {
    /// Full next-token loss.
    pub fn full(tokens: Vec<usize>) -> Self {
        LmSequence { tokens, loss_from: 1 }
    }

    /// Prompt is masked; loss covers `answer` (which should end in EOS).
    pub fn prompted(prompt: &[usize], answer: &[usize]) -> Self {
        let mut tokens = prompt.to_vec();
        tokens.extend_from_slice(answer);
        LmSequence {
            tokens,
            loss_from: prompt.len(),
        }
    }

    /// Per-position targets; masked positions are `None`.
    pub fn targets(&self) -> Vec<Option<usize>> {
        let n = self.tokens.len();
        (0..n)
            .map(|t| (t + 1 < n && t + 1 >= self.loss_from).then(|| self.tokens[t + 1]))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub step: usize,
    pub train_loss: f64,
    pub validation_loss: Option<f64>,
}

/// Mean masked next-token loss over a batch (one graph).
fn batch_loss(g: &mut Graph, vars: &[Var], cfg: &LMConfig, seqs: &[&LmSequence]) -> Result<Var> {
    let views: Vec<&[usize]> = seqs.iter().map(|s| s.tokens.as_slice()).collect();
    let batch = pack(&views, cfg.max_seq_len)?;
    let targets: Vec<Option<usize>> = seqs.iter().flat_map(|s| s.targets()).collect();
    let fwd = forward(g, vars, cfg, &batch, &[])?;
    let logits = head(g, vars, cfg, fwd.hidden, None)?;
    Ok(g.cross_entropy(logits, &targets)?)
}

/// Mean masked loss of `seqs` under `params`, batched by `batch_size`.
pub fn evaluate_loss(params: &LMParams, seqs: &[LmSequence]) -> Result<f64> {
    let mut total = 0.0;
    let mut count = 0usize;
    for chunk in seqs.chunks(params.config.batch_size.max(1)) {
        let refs: Vec<&LmSequence> = chunk.iter().collect();
        let n: usize = chunk.iter().map(|s| s.targets().iter().flatten().count()).sum();
        if n == 0 {
            continue;
        }
        let mut g = Graph::new();
        let vars: Vec<Var> = params.tensors.iter().map(|t| g.constant(t.clone())).collect();
        let loss = batch_loss(&mut g, &vars, &params.config, &refs)?;
        total += g.value(loss).data()[0] * n as f64;
        count += n;
    }
    Ok(if count == 0 { 0.0 } else { total / count as f64 })
}

/// What the epoch callback sees.
pub struct EpochEnd<'a> {
    pub stats: &'a EpochStats,
    pub params: &'a LMParams,
}

/// AdamW with warmup plus cosine decay, gradient clipping, and mixed
/// batches drawn from one shuffled pool of sequences per epoch.
///
/// Parameters are rounded to f32 after training so the in-memory model and
/// a saved checkpoint are identical. The callback runs at the end of every
/// epoch on f32-rounded parameters.
pub fn train_lm(
    config: &LMConfig,
    train: &[LmSequence],
    validation: &[LmSequence],
    seed: u64,
    mut on_epoch: impl FnMut(EpochEnd<'_>) -> Result<()>,
) -> Result<(LMParams, Vec<EpochStats>)> {
    config.validate()?;
    if train.is_empty() {
        return Err(LmError::Config("no training sequences".into()));
    }
    if let Some(s) = train.iter().chain(validation).find(|s| s.tokens.len() > config.max_seq_len) {
        return Err(LmError::SequenceTooLong {
            len: s.tokens.len(),
            max: config.max_seq_len,
        });
    }
    if let Some(&bad) = train.iter().flat_map(|s| &s.tokens).find(|&&t| t >= config.vocab_size) {
        return Err(LmError::Config(format!("token id {bad} outside vocab of {}", config.vocab_size)));
    }
    let mut params = LMParams::init(config, seed)?;
    let mask = params.decay_mask();
    let mut opt = OptimState::new(
        &params.tensors,
        AdamConfig {
            lr: config.peak_lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: config.adam_eps,
            weight_decay: config.weight_decay,
        },
    );
    let mut rng = stream_rng(seed, "baselm/batches");
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut stats = Vec::new();
    let mut step = 0;
    let mut epoch = 0;
    while step < config.max_steps {
        order.shuffle(&mut rng);
        let mut sum = 0.0;
        let mut n_batches = 0;
        for idx in order.chunks(config.batch_size) {
            if step >= config.max_steps {
                break;
            }
            let seqs: Vec<&LmSequence> = idx.iter().map(|&i| &train[i]).collect();
            let mut g = Graph::new();
            let vars: Vec<Var> = params.tensors.iter().map(|t| g.param(t.clone())).collect();
            let loss = batch_loss(&mut g, &vars, config, &seqs)?;
            let lv = g.value(loss).data()[0];
            if !lv.is_finite() {
                return Err(LmError::Divergence { step, loss: lv });
            }
            let grads = g.backward(loss)?;
            let mut gs: Vec<_> = vars.iter().zip(&params.tensors).map(|(&v, t)| grads.get_or_zeros(v, t)).collect();
            if config.clip_norm > 0.0 {
                clip_grad_norm(&mut gs, config.clip_norm);
            }
            opt.step_masked(&mut params.tensors, &gs, config.lr_at(step), Some(&mask))?;
            sum += lv;
            n_batches += 1;
            step += 1;
        }
        let mut snapshot = params.clone();
        snapshot.round_to_f32();
        let validation_loss = if validation.is_empty() {
            None
        } else {
            Some(evaluate_loss(&snapshot, validation)?)
        };
        let s = EpochStats {
            epoch,
            step,
            train_loss: sum / n_batches.max(1) as f64,
            validation_loss,
        };
        on_epoch(EpochEnd {
            stats: &s,
            params: &snapshot,
        })?;
        stats.push(s);
        epoch += 1;
    }
    params.round_to_f32();
    Ok((params, stats))
}
