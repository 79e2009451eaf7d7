// SPDX-License-Identifier: MIT OR Apache-2.0

//! Dense tensor kernel: values, reverse-mode graph, AdamW.

pub mod gemm;
pub mod gradcheck;
mod graph;
mod optim;
mod tensor;

pub(crate) use graph::gelu_parts;
pub use graph::{log_sum_exp, softmax_in_place, Gradients, Graph, Var};
pub use optim::{clip_grad_norm, AdamConfig, OptimState};
pub use tensor::Tensor;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, NumError>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NumError {
    #[error("{op}: shape mismatch {lhs:?} vs {rhs:?} ({detail})")]
    Shape {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
        detail: String,
    },
    #[error("{op}: invalid shape {shape:?}")]
    InvalidShape { op: &'static str, shape: Vec<usize> },
    #[error("shape {shape:?} does not hold {len} values")]
    DataLength { shape: Vec<usize>, len: usize },
    #[error("{op}: index {index} out of range (bound {bound})")]
    IndexOutOfRange { op: &'static str, index: usize, bound: usize },
    #[error("expected a scalar, got shape {shape:?}")]
    NotScalar { shape: Vec<usize> },
    #[error("{op}: non-finite value produced")]
    NonFinite { op: &'static str },
    #[error("attention segments must tile all {rows} rows in order")]
    Segments { rows: usize },
}

impl NumError {
    pub(crate) fn shape(op: &'static str, lhs: &[usize], rhs: &[usize], detail: &str) -> Self {
        NumError::Shape {
            op,
            lhs: lhs.to_vec(),
            rhs: rhs.to_vec(),
            detail: detail.to_string(),
        }
    }
}


/// Index of the largest value; lowest index wins ties. Zero for an empty
/// slice.
pub fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}
