// SPDX-License-Identifier: MIT OR Apache-2.0

//! Sparse autoencoder with a supervised block of relation slots.
//!
//! The code is `z = ReLU(h W_e + b_e)` of width `K + R`: columns `0..K` are
//! free features, columns `K..K+R` are relation slots, slot `r` at `K + r`.
//! Reconstruction is `z W_d + b_d`, so row `j` of `W_d` is the decoded
//! direction of code unit `j`.

mod io;
mod objective;
mod train;

pub use io::{load_sae, save_sae};
pub use objective::{loss_graph, loss_terms, LossGraph, LossTerms, LossWeights};
pub use train::{train_sae, train_stage1, train_stage2, EpochTrace, SaeData};

use std::cell::Cell;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numkern::{gemm, NumError, Tensor};
use crate::rng::stream_rng;

#[derive(Debug, Error)]
pub enum SaeError {
    #[error(transparent)]
    Num(#[from] NumError),
    #[error("invalid SAE config: {0}")]
    Config(String),
    #[error("input of width {got}, expected {expected}")]
    Dim { got: usize, expected: usize },
    #[error("{0} labels are required while that loss term is enabled")]
    MissingLabels(&'static str),
    #[error("stage {stage} diverged at epoch {epoch}")]
    Divergence { stage: u8, epoch: usize },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("format: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, SaeError>;

/// Objective arm: which term (or stage) is switched off.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Ablation {
    #[default]
    None,
    Align,
    Ortho,
    Value,
    Stage1,
}

impl Ablation {
    pub const ALL: [Ablation; 5] = [Ablation::None, Ablation::Align, Ablation::Ortho, Ablation::Value, Ablation::Stage1];

    /// Arm label: `joint`, `no_align`, ...
    pub fn arm_name(self) -> &'static str {
        match self {
            Ablation::None => "joint",
            Ablation::Align => "no_align",
            Ablation::Ortho => "no_ortho",
            Ablation::Value => "no_value",
            Ablation::Stage1 => "no_stage1",
        }
    }

    pub fn parse(s: &str) -> Option<Ablation> {
        match s {
            "none" | "joint" => Some(Ablation::None),
            "align" | "no_align" => Some(Ablation::Align),
            "ortho" | "no_ortho" => Some(Ablation::Ortho),
            "value" | "no_value" => Some(Ablation::Value),
            "stage1" | "no_stage1" => Some(Ablation::Stage1),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SAEConfig {
    pub d: usize,
    pub n_free: usize,
    pub n_rel: usize,
    /// Output width of the value heads (the LM vocabulary).
    pub vocab_size: usize,
    pub value_hidden: usize,
    pub lambda_recon: f64,
    pub lambda_sparse: f64,
    pub lambda_align: f64,
    pub lambda_ortho: f64,
    pub lambda_value: f64,
    pub stage1_epochs: usize,
    pub stage2_epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
    #[serde(default)]
    pub ablation: Ablation,
    /// L1 over the whole code instead of the free block only.
    #[serde(default)]
    pub sparse_full_code: bool,
}

impl SAEConfig {
    pub fn new(d: usize, n_free: usize, n_rel: usize, vocab_size: usize) -> Self {
        SAEConfig {
            d,
            n_free,
            n_rel,
            vocab_size,
            value_hidden: 64,
            lambda_recon: 1.0,
            lambda_sparse: 1e-3,
            lambda_align: 1.0,
            lambda_ortho: 1e-2,
            lambda_value: 0.5,
            stage1_epochs: 100,
            stage2_epochs: 500,
            batch_size: 64,
            lr: 1e-3,
            seed: 0,
            ablation: Ablation::None,
            sparse_full_code: false,
        }
    }

    pub fn code_dim(&self) -> usize {
        self.n_free + self.n_rel
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(SaeError::Config(m.to_string()));
        if self.d == 0 || self.n_rel == 0 {
            return fail("d and n_rel must be positive");
        }
        if self.batch_size == 0 || self.value_hidden == 0 || self.vocab_size == 0 {
            return fail("batch_size, value_hidden and vocab_size must be positive");
        }
        let ls = [
            self.lambda_recon,
            self.lambda_sparse,
            self.lambda_align,
            self.lambda_ortho,
            self.lambda_value,
        ];
        if ls.iter().any(|l| !l.is_finite() || *l < 0.0) || !(self.lr > 0.0) {
            return fail("loss weights must be finite and non-negative, lr positive");
        }
        Ok(())
    }

    /// Stage-2 weights after applying the ablation flag.
    pub fn stage2_weights(&self) -> LossWeights {
        LossWeights {
            recon: self.lambda_recon,
            sparse: self.lambda_sparse,
            align: if self.ablation == Ablation::Align { 0.0 } else { self.lambda_align },
            ortho: if self.ablation == Ablation::Ortho { 0.0 } else { self.lambda_ortho },
            value: if self.ablation == Ablation::Value { 0.0 } else { self.lambda_value },
        }
    }

    pub fn stage1_weights(&self) -> LossWeights {
        LossWeights {
            recon: self.lambda_recon,
            sparse: self.lambda_sparse,
            align: 0.0,
            ortho: 0.0,
            value: 0.0,
        }
    }

    pub fn effective_stage1_epochs(&self) -> usize {
        if self.ablation == Ablation::Stage1 {
            0
        } else {
            self.stage1_epochs
        }
    }
}

// ---------------------------------------------------------------------------
// Parameters

pub(crate) const W_E: usize = 0;
pub(crate) const B_E: usize = 1;
pub(crate) const W_D: usize = 2;
pub(crate) const B_D: usize = 3;
pub(crate) const V_W1: usize = 4;
pub(crate) const V_B1: usize = 5;
pub(crate) const N_CORE: usize = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct SAEParams {
    pub config: SAEConfig,
    /// `W_e [d, K+R]`, `b_e`, `W_d [K+R, d]`, `b_d`, value-head first layer
    /// `[R, H]` weights and biases, then per relation `W2 [H, V]`, `b2 [V]`.
    pub tensors: Vec<Tensor>,
}

fn uniform(rng: &mut impl Rng, shape: Vec<usize>, bound: f64) -> Result<Tensor> {
    let n = shape.iter().product();
    let data = (0..n).map(|_| rng.gen_range(-bound..bound)).collect();
    Ok(Tensor::new(shape, data)?)
}

impl SAEParams {
    pub fn init(config: &SAEConfig) -> Result<Self> {
        config.validate()?;
        let (d, c, r, h, v) = (config.d, config.code_dim(), config.n_rel, config.value_hidden, config.vocab_size);
        let mut rng = stream_rng(config.seed, "sae/init");
        let bound = 1.0 / (d as f64).sqrt();
        let mut tensors = vec![
            uniform(&mut rng, vec![d, c], bound)?,
            Tensor::zeros(&[c]),
            uniform(&mut rng, vec![c, d], bound)?,
            Tensor::zeros(&[d]),
            uniform(&mut rng, vec![r, h], 1.0)?,
            Tensor::zeros(&[r, h]),
        ];
        let b2 = 1.0 / (h as f64).sqrt();
        for _ in 0..r {
            tensors.push(uniform(&mut rng, vec![h, v], b2)?);
            tensors.push(Tensor::zeros(&[v]));
        }
        Ok(SAEParams {
            config: config.clone(),
            tensors,
        })
    }

    pub fn n_free(&self) -> usize {
        self.config.n_free
    }

    pub fn n_rel(&self) -> usize {
        self.config.n_rel
    }

    pub fn code_dim(&self) -> usize {
        self.config.code_dim()
    }

    pub fn w_e(&self) -> &Tensor {
        &self.tensors[W_E]
    }

    pub fn b_e(&self) -> &Tensor {
        &self.tensors[B_E]
    }

    pub fn w_d(&self) -> &Tensor {
        &self.tensors[W_D]
    }

    pub fn b_d(&self) -> &Tensor {
        &self.tensors[B_D]
    }

    /// Index of relation `r`'s slot in the full code.
    pub fn slot_index(&self, r: usize) -> usize {
        self.config.n_free + r
    }

    pub fn round_to_f32(&mut self) {
        for t in &mut self.tensors {
            *t = t.round_to_f32();
        }
    }

    /// `z = ReLU(h W_e + b_e)` for one vector.
    pub fn encode(&self, h: &[f64]) -> Result<SparseCode> {
        let z = self.encode_batch(&Tensor::matrix(1, h.len(), h.to_vec())?)?;
        Ok(SparseCode {
            z: z.into_vec(),
            n_free: self.config.n_free,
        })
    }

    /// Codes for every row of `h [N, d]`.
    pub fn encode_batch(&self, h: &Tensor) -> Result<Tensor> {
        let (n, d) = (h.rows(), h.cols());
        if d != self.config.d {
            return Err(SaeError::Dim {
                got: d,
                expected: self.config.d,
            });
        }
        let c = self.code_dim();
        let mut z = vec![0.0; n * c];
        for i in 0..n {
            z[i * c..(i + 1) * c].copy_from_slice(self.b_e().data());
        }
        gemm::gemm(n, d, c, h.data(), false, self.w_e().data(), false, &mut z, 1.0);
        for x in &mut z {
            *x = x.max(0.0);
        }
        Ok(Tensor::matrix(n, c, z)?)
    }

    /// `ĥ = z W_d + b_d`.
    pub fn decode(&self, z: &[f64]) -> Result<Vec<f64>> {
        Ok(self.decode_batch(&Tensor::matrix(1, z.len(), z.to_vec())?)?.into_vec())
    }

    pub fn decode_batch(&self, z: &Tensor) -> Result<Tensor> {
        let (n, c) = (z.rows(), z.cols());
        if c != self.code_dim() {
            return Err(SaeError::Dim {
                got: c,
                expected: self.code_dim(),
            });
        }
        let d = self.config.d;
        let mut out = vec![0.0; n * d];
        for i in 0..n {
            out[i * d..(i + 1) * d].copy_from_slice(self.b_d().data());
        }
        gemm::gemm(n, c, d, z.data(), false, self.w_d().data(), false, &mut out, 1.0);
        Ok(Tensor::matrix(n, d, out)?)
    }

    /// Decoded direction of code unit `j` (row `j` of `W_d`).
    pub fn direction(&self, j: usize) -> Option<&[f64]> {
        (j < self.code_dim()).then(|| self.w_d().row(j))
    }

    /// Relation `r`'s head applied to a scalar slot activation.
    pub fn value_head_forward(&self, r: usize, s: f64) -> Result<Vec<f64>> {
        if r >= self.n_rel() {
            return Err(SaeError::Config(format!("relation {r} out of range")));
        }
        VALUE_HEAD_CALLS.with(|c| c.set(c.get() + 1));
        let h = self.config.value_hidden;
        let w1 = &self.tensors[V_W1].data()[r * h..(r + 1) * h];
        let b1 = &self.tensors[V_B1].data()[r * h..(r + 1) * h];
        let hidden: Vec<f64> = w1.iter().zip(b1).map(|(w, b)| (s * w + b).max(0.0)).collect();
        let w2 = &self.tensors[N_CORE + 2 + 2 * r];
        let b2 = &self.tensors[N_CORE + 3 + 2 * r];
        let v = self.config.vocab_size;
        let mut out = b2.data().to_vec();
        gemm::gemm(1, h, v, &hidden, false, w2.data(), false, &mut out, 1.0);
        Ok(out)
    }
}

thread_local! {
    static VALUE_HEAD_CALLS: Cell<usize> = const { Cell::new(0) };
}

/// Number of [`SAEParams::value_head_forward`] calls made on this thread.
pub fn value_head_calls() -> usize {
    VALUE_HEAD_CALLS.with(Cell::get)
}

// ---------------------------------------------------------------------------
// Codes

#[derive(Debug, Clone, PartialEq)]
pub struct SparseCode {
    pub z: Vec<f64>,
    pub n_free: usize,
}

impl SparseCode {
    pub fn free(&self) -> &[f64] {
        &self.z[..self.n_free]
    }

    pub fn concept(&self) -> &[f64] {
        &self.z[self.n_free..]
    }
}

/// `Σ_{i≠j} cov(z_i, z_j)²` over the free block of `codes [B, K+R]`, with
/// `1/B` covariance. Zero for fewer than two rows.
pub fn independence_score(codes: &Tensor, n_free: usize) -> f64 {
    let (b, c) = (codes.rows(), codes.cols());
    if b < 2 || n_free == 0 {
        return 0.0;
    }
    let k = n_free.min(c);
    let mut means = vec![0.0; k];
    for i in 0..b {
        for (m, x) in means.iter_mut().zip(&codes.row(i)[..k]) {
            *m += x;
        }
    }
    for m in &mut means {
        *m /= b as f64;
    }
    let mut zc = vec![0.0; b * k];
    for i in 0..b {
        for j in 0..k {
            zc[i * k + j] = codes.row(i)[j] - means[j];
        }
    }
    let mut cov = vec![0.0; k * k];
    gemm::gemm(k, b, k, &zc, true, &zc, false, &mut cov, 0.0);
    let inv = 1.0 / (b as f64);
    let mut s = 0.0;
    for i in 0..k {
        for j in 0..k {
            if i != j {
                let v = cov[i * k + j] * inv;
                s += v * v;
            }
        }
    }
    s
}

/// Fraction of free features that are zero on every row of `codes`.
pub fn dead_fraction(codes: &Tensor, n_free: usize) -> f64 {
    if n_free == 0 {
        return 0.0;
    }
    let dead = (0..n_free).filter(|&j| (0..codes.rows()).all(|i| codes.row(i)[j] <= 0.0)).count();
    dead as f64 / n_free as f64
}

#[cfg(test)]
mod tests;
