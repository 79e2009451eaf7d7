// SPDX-License-Identifier: MIT OR Apache-2.0

//! Pre-norm decoder-only transformer with learned positions.
//!
//! Layer `l` names the residual stream entering block `l`, so layer 0 is
//! the token-plus-position embedding and hooks at layer `l` feed blocks
//! `l..n_layers`.

use std::collections::BTreeMap;

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::vocab::SEP;
use super::{LmError, Result};
use crate::numkern::{Graph, Tensor, Var};
use crate::rng::stream_rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Pooling {
    #[default]
    FinalToken,
    Mean,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LMConfig {
    pub d_model: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub d_ff: usize,
    pub max_seq_len: usize,
    pub vocab_size: usize,
    pub warmup_steps: usize,
    pub peak_lr: f64,
    pub floor_lr: f64,
    pub batch_size: usize,
    pub max_steps: usize,
    pub weight_decay: f64,
    pub adam_eps: f64,
    pub clip_norm: f64,
    #[serde(default)]
    pub pooling: Pooling,
}

impl Default for LMConfig {
    fn default() -> Self {
        LMConfig {
            d_model: 128,
            n_layers: 4,
            n_heads: 4,
            d_ff: 256,
            max_seq_len: 96,
            vocab_size: 0,
            warmup_steps: 200,
            peak_lr: 1e-3,
            floor_lr: 1e-4,
            batch_size: 32,
            max_steps: 4000,
            weight_decay: 0.1,
            adam_eps: 1e-6,
            clip_norm: 1.0,
            pooling: Pooling::FinalToken,
        }
    }
}

impl LMConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(LmError::Config(m.to_string()));
        if self.d_model == 0 || self.n_layers == 0 || self.n_heads == 0 || self.d_ff == 0 {
            return fail("model dimensions must be positive");
        }
        if self.d_model % self.n_heads != 0 {
            return fail("d_model must be divisible by n_heads");
        }
        if self.vocab_size < 6 {
            return fail("vocab_size must cover the special tokens");
        }
        if self.max_seq_len < 2 {
            return fail("max_seq_len must be at least 2");
        }
        if self.batch_size == 0 {
            return fail("batch_size must be positive");
        }
        if !(self.peak_lr > 0.0 && self.floor_lr >= 0.0 && self.floor_lr <= self.peak_lr) {
            return fail("learning rates must satisfy 0 <= floor <= peak, peak > 0");
        }
        Ok(())
    }

    /// Warmup to the peak, then cosine to the floor at `max_steps`.
    pub fn lr_at(&self, step: usize) -> f64 {
        if step < self.warmup_steps {
            return self.peak_lr * (step + 1) as f64 / self.warmup_steps as f64;
        }
        let span = self.max_steps.saturating_sub(self.warmup_steps).max(1);
        let t = ((step - self.warmup_steps) as f64 / span as f64).min(1.0);
        self.floor_lr + 0.5 * (self.peak_lr - self.floor_lr) * (1.0 + (std::f64::consts::PI * t).cos())
    }
}

// ---------------------------------------------------------------------------
// Parameters

pub(crate) const PER_LAYER: usize = 16;
const LAYER_NAMES: [&str; PER_LAYER] = [
    "ln1.g", "ln1.b", "attn.wq", "attn.bq", "attn.wk", "attn.bk", "attn.wv", "attn.bv", "attn.wo", "attn.bo", "ln2.g", "ln2.b", "mlp.w1",
    "mlp.b1", "mlp.w2", "mlp.b2",
];

#[derive(Debug, Clone, PartialEq)]
pub struct LMParams {
    pub config: LMConfig,
    /// Declared order: token embedding, position embedding, per-layer
    /// blocks (see [`LMParams::names`]), final norm, output head.
    pub tensors: Vec<Tensor>,
}

impl LMParams {
    pub fn shapes(config: &LMConfig) -> Vec<Vec<usize>> {
        let (d, f, v) = (config.d_model, config.d_ff, config.vocab_size);
        let mut s = vec![vec![v, d], vec![config.max_seq_len, d]];
        for _ in 0..config.n_layers {
            s.extend([
                vec![d],
                vec![d],
                vec![d, d],
                vec![d],
                vec![d, d],
                vec![d],
                vec![d, d],
                vec![d],
                vec![d, d],
                vec![d],
                vec![d],
                vec![d],
                vec![d, f],
                vec![f],
                vec![f, d],
                vec![d],
            ]);
        }
        s.extend([vec![d], vec![d], vec![d, v], vec![v]]);
        s
    }

    pub fn names(config: &LMConfig) -> Vec<String> {
        let mut n = vec!["tok_emb".to_string(), "pos_emb".to_string()];
        for l in 0..config.n_layers {
            n.extend(LAYER_NAMES.iter().map(|s| format!("block{l}.{s}")));
        }
        n.extend(["ln_f.g", "ln_f.b", "head.w", "head.b"].map(String::from));
        n
    }

    pub fn init(config: &LMConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = stream_rng(seed, "baselm/init");
        let std = 0.02;
        let resid_std = std / (2.0 * config.n_layers as f64).sqrt();
        let names = Self::names(config);
        let mut tensors = Vec::new();
        for (shape, name) in Self::shapes(config).into_iter().zip(&names) {
            let n: usize = shape.iter().product();
            let data = if name.ends_with(".g") {
                vec![1.0; n]
            } else if shape.len() == 1 {
                vec![0.0; n]
            } else {
                let s = if name.ends_with("wo") || name.ends_with("w2") {
                    resid_std
                } else {
                    std
                };
                let dist = Normal::new(0.0, s).expect("positive std");
                (0..n).map(|_| dist.sample(&mut rng)).collect()
            };
            tensors.push(Tensor::new(shape, data)?);
        }
        Ok(LMParams {
            config: config.clone(),
            tensors,
        })
    }

    /// Weight decay applies to matrices only.
    pub fn decay_mask(&self) -> Vec<bool> {
        self.tensors.iter().map(|t| t.shape().len() == 2).collect()
    }

    pub fn round_to_f32(&mut self) {
        for t in &mut self.tensors {
            *t = t.round_to_f32();
        }
    }

    pub fn n_values(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }
}

// ---------------------------------------------------------------------------
// Hooks

/// Residual-stream edit applied during the forward pass.
pub trait Hook {
    /// Layer whose input residual is edited.
    fn layer(&self) -> usize;
    /// Edit `h` at `position`; `prompt_end` is the final prompt token index.
    fn apply(&self, position: usize, prompt_end: usize, h: &mut [f64]);
}

/// Hook from a closure over `(position, prompt_end, h)`.
pub struct FnHook<F> {
    pub layer: usize,
    pub f: F,
}

impl<F: Fn(usize, usize, &mut [f64])> Hook for FnHook<F> {
    fn layer(&self) -> usize {
        self.layer
    }
    fn apply(&self, position: usize, prompt_end: usize, h: &mut [f64]) {
        (self.f)(position, prompt_end, h)
    }
}

// ---------------------------------------------------------------------------
// Forward

pub(crate) struct Packed {
    pub tokens: Vec<usize>,
    pub positions: Vec<usize>,
    pub segments: Vec<(usize, usize)>,
}

pub(crate) fn pack(seqs: &[&[usize]], max_len: usize) -> Result<Packed> {
    let mut p = Packed {
        tokens: Vec::new(),
        positions: Vec::new(),
        segments: Vec::with_capacity(seqs.len()),
    };
    for s in seqs {
        if s.is_empty() {
            return Err(LmError::Config("empty sequence".into()));
        }
        if s.len() > max_len {
            return Err(LmError::SequenceTooLong {
                len: s.len(),
                max: max_len,
            });
        }
        p.segments.push((p.tokens.len(), s.len()));
        p.tokens.extend_from_slice(s);
        p.positions.extend(0..s.len());
    }
    Ok(p)
}

pub(crate) struct HookSlot<'a> {
    pub seq: usize,
    pub prompt_end: usize,
    pub hook: &'a dyn Hook,
}

pub(crate) struct Forward {
    /// Input residual of each block, `[N, d]`.
    pub residuals: Vec<Var>,
    /// Post final-norm hidden states, `[N, d]`.
    pub hidden: Var,
}

pub(crate) fn forward(g: &mut Graph, vars: &[Var], cfg: &LMConfig, batch: &Packed, hooks: &[HookSlot<'_>]) -> Result<Forward> {
    let tok = g.index_rows(vars[0], &batch.tokens)?;
    let pos = g.index_rows(vars[1], &batch.positions)?;
    let mut x = g.add(tok, pos)?;
    let mut residuals = Vec::with_capacity(cfg.n_layers);
    for l in 0..cfg.n_layers {
        x = apply_hooks(g, x, l, batch, hooks)?;
        residuals.push(x);
        let p = &vars[2 + l * PER_LAYER..2 + (l + 1) * PER_LAYER];
        let a = g.layer_norm(x, p[0], p[1], 1e-5)?;
        let q = g.matmul(a, p[2])?;
        let q = g.add_row(q, p[3])?;
        let k = g.matmul(a, p[4])?;
        let k = g.add_row(k, p[5])?;
        let v = g.matmul(a, p[6])?;
        let v = g.add_row(v, p[7])?;
        let att = g.causal_attention(q, k, v, cfg.n_heads, &batch.segments)?;
        let o = g.matmul(att, p[8])?;
        let o = g.add_row(o, p[9])?;
        x = g.add(x, o)?;
        let m = g.layer_norm(x, p[10], p[11], 1e-5)?;
        let f = g.matmul(m, p[12])?;
        let f = g.add_row(f, p[13])?;
        let f = g.gelu(f)?;
        let f = g.matmul(f, p[14])?;
        let f = g.add_row(f, p[15])?;
        x = g.add(x, f)?;
    }
    let base = 2 + cfg.n_layers * PER_LAYER;
    let hidden = g.layer_norm(x, vars[base], vars[base + 1], 1e-5)?;
    Ok(Forward { residuals, hidden })
}

fn apply_hooks(g: &mut Graph, x: Var, layer: usize, batch: &Packed, hooks: &[HookSlot<'_>]) -> Result<Var> {
    let active: Vec<&HookSlot<'_>> = hooks.iter().filter(|h| h.hook.layer() == layer).collect();
    if active.is_empty() {
        return Ok(x);
    }
    let mut t = g.value(x).clone();
    let d = t.cols();
    {
        let data = t.data_mut();
        for slot in active {
            let (start, len) = batch.segments[slot.seq];
            for pos in 0..len {
                let row = &mut data[(start + pos) * d..(start + pos + 1) * d];
                slot.hook.apply(pos, slot.prompt_end, row);
            }
        }
    }
    Ok(g.constant(t))
}

/// Output logits for the given rows of the final hidden states.
pub(crate) fn head(g: &mut Graph, vars: &[Var], cfg: &LMConfig, hidden: Var, rows: Option<&[usize]>) -> Result<Var> {
    let base = 2 + cfg.n_layers * PER_LAYER;
    let h = match rows {
        Some(r) => g.index_rows(hidden, r)?,
        None => hidden,
    };
    let logits = g.matmul(h, vars[base + 2])?;
    Ok(g.add_row(logits, vars[base + 3])?)
}

pub(crate) fn leaf_vars(g: &mut Graph, params: &LMParams) -> Vec<Var> {
    params.tensors.iter().map(|t| g.constant(t.clone())).collect()
}

// Prompts per packed inference pass.
const INFER_CHUNK: usize = 64;

impl LMParams {
    /// Logits at every position, `[len, vocab]`.
    pub fn logits(&self, tokens: &[usize]) -> Result<Tensor> {
        let batch = pack(&[tokens], self.config.max_seq_len)?;
        let mut g = Graph::new();
        let vars = leaf_vars(&mut g, self);
        let fwd = forward(&mut g, &vars, &self.config, &batch, &[])?;
        let out = head(&mut g, &vars, &self.config, fwd.hidden, None)?;
        Ok(g.value(out).clone())
    }

    /// Logits plus the residual at each requested layer, read at the
    /// separator token (or mean-pooled over the prompt, per config).
    pub fn forward_with_capture(&self, tokens: &[usize], layers: &[usize]) -> Result<(Tensor, BTreeMap<usize, Vec<f64>>)> {
        let sep = tokens.iter().position(|&t| t == SEP).ok_or(LmError::NoSeparator)?;
        let logits = self.logits(tokens)?;
        let caps = self.capture_batch(&[tokens.to_vec()], &[sep], layers)?;
        let map = layers.iter().copied().zip(caps.into_iter().next().expect("one sequence")).collect();
        Ok((logits, map))
    }

    /// Residual vectors for each sequence at `capture[i]`, for each layer in
    /// `layers` (outer index: sequence, inner: layer).
    pub fn capture_batch(&self, seqs: &[Vec<usize>], capture: &[usize], layers: &[usize]) -> Result<Vec<Vec<Vec<f64>>>> {
        if seqs.len() != capture.len() {
            return Err(LmError::Config("one capture position per sequence".into()));
        }
        for &l in layers {
            if l >= self.config.n_layers {
                return Err(LmError::Config(format!("layer {l} out of range (0..{})", self.config.n_layers)));
            }
        }
        let d = self.config.d_model;
        let mut out = Vec::with_capacity(seqs.len());
        for (chunk, caps) in seqs.chunks(INFER_CHUNK).zip(capture.chunks(INFER_CHUNK)) {
            // Later tokens cannot influence the capture row, so truncate.
            let trimmed: Vec<&[usize]> = chunk
                .iter()
                .zip(caps)
                .map(|(s, &c)| {
                    if c >= s.len() {
                        Err(LmError::Config(format!("capture position {c} beyond sequence length {}", s.len())))
                    } else {
                        Ok(&s[..=c])
                    }
                })
                .collect::<Result<_>>()?;
            let batch = pack(&trimmed, self.config.max_seq_len)?;
            let mut g = Graph::new();
            let vars = leaf_vars(&mut g, self);
            let fwd = forward(&mut g, &vars, &self.config, &batch, &[])?;
            for &(start, len) in &batch.segments {
                let mut per_layer = Vec::with_capacity(layers.len());
                for &l in layers {
                    let data = g.value(fwd.residuals[l]).data();
                    let v = match self.config.pooling {
                        Pooling::FinalToken => data[(start + len - 1) * d..(start + len) * d].to_vec(),
                        Pooling::Mean => {
                            let mut acc = vec![0.0; d];
                            for r in start..start + len {
                                for (a, x) in acc.iter_mut().zip(&data[r * d..(r + 1) * d]) {
                                    *a += x;
                                }
                            }
                            acc.iter().map(|a| a / len as f64).collect()
                        }
                    };
                    per_layer.push(v);
                }
                out.push(per_layer);
            }
        }
        Ok(out)
    }

    /// Greedy continuation of `prompt`, stopping at EOS (excluded).
    pub fn generate(&self, prompt: &[usize], max_new_tokens: usize, hook: Option<&dyn Hook>) -> Result<Vec<usize>> {
        let mut out = self.generate_batch(&[prompt.to_vec()], max_new_tokens, &[hook])?;
        Ok(out.pop().expect("one prompt"))
    }
}
