// SPDX-License-Identifier: MIT OR Apache-2.0

//! Tape-style reverse-mode differentiation over [`Tensor`] values.
//!
//! Every op method evaluates eagerly, records the result on the graph and
//! returns a [`Var`] handle. [`Graph::backward`] walks the tape in reverse
//! and returns the adjoint of every parameter leaf.
//!
//! Ops treat tensors as matrices: the trailing dimension is the column
//! count and all leading dimensions fold into rows (see [`Tensor::rows`]).
//! All reductions run left to right in index order, so results are
//! bitwise reproducible.

use super::gemm;
use super::{NumError, Result, Tensor};

/// Handle to a node on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Param,
    Constant,
    MatMul(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    Scale(Var, f64),
    Relu(Var),
    Gelu(Var),
    Softmax(Var),
    CrossEntropy {
        logits: Var,
        targets: Vec<Option<usize>>,
        probs: Vec<f64>,
        count: usize,
    },
    Mse(Var, Var),
    L1(Var),
    Sum(Var),
    SumSquares(Var),
    CenterCols(Var),
    LayerNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Vec<f64>,
        rstd: Vec<f64>,
    },
    IndexRows {
        table: Var,
        ids: Vec<usize>,
    },
    Attention {
        q: Var,
        k: Var,
        v: Var,
        heads: usize,
        segments: Vec<(usize, usize)>,
        probs: Vec<Vec<f64>>,
    },
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    SliceCols {
        x: Var,
        start: usize,
    },
    SliceRows {
        x: Var,
        start: usize,
    },
    GatherCols {
        x: Var,
        cols: Vec<usize>,
    },
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Param => "param",
            Op::Constant => "constant",
            Op::MatMul(..) => "matmul",
            Op::Transpose(..) => "transpose",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::AddRow(..) => "add_row",
            Op::Scale(..) => "scale",
            Op::Relu(..) => "relu",
            Op::Gelu(..) => "gelu",
            Op::Softmax(..) => "softmax",
            Op::CrossEntropy { .. } => "cross_entropy",
            Op::Mse(..) => "mse",
            Op::L1(..) => "l1",
            Op::Sum(..) => "sum",
            Op::SumSquares(..) => "sum_squares",
            Op::CenterCols(..) => "center_cols",
            Op::LayerNorm { .. } => "layer_norm",
            Op::IndexRows { .. } => "index_rows",
            Op::Attention { .. } => "causal_attention",
            Op::ConcatCols(..) => "concat_cols",
            Op::ConcatRows(..) => "concat_rows",
            Op::SliceCols { .. } => "slice_cols",
            Op::SliceRows { .. } => "slice_rows",
            Op::GatherCols { .. } => "gather_cols",
        }
    }
}

struct Node {
    op: Op,
    value: Tensor,
    needs_grad: bool,
}

/// Recorded computation. Confined to one thread; build one per example or
/// batch and drop it after [`Graph::backward`].
#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
    adjoints: Vec<Option<Tensor>>,
}

/// Adjoints of the parameter leaves after a backward pass.
#[derive(Debug, Clone)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, var: Var) -> Option<&Tensor> {
        self.grads.get(var.0).and_then(Option::as_ref)
    }

    /// Gradient of `var`, or a zero tensor shaped like `like` when the
    /// loss does not depend on it.
    pub fn get_or_zeros(&self, var: Var, like: &Tensor) -> Tensor {
        self.get(var).cloned().unwrap_or_else(|| Tensor::zeros(like.shape()))
    }
}

pub(crate) fn gelu_parts(x: f64) -> (f64, f64) {
    const C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
    const A: f64 = 0.044_715;
    let inner = C * (x + A * x * x * x);
    let t = inner.tanh();
    let y = 0.5 * x * (1.0 + t);
    let dy = 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * C * (1.0 + 3.0 * A * x * x);
    (y, dy)
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, var: Var) -> &Tensor {
        &self.nodes[var.0].value
    }

    /// Adjoint recorded for `var` by the last backward pass.
    pub fn adjoint(&self, var: Var) -> Option<&Tensor> {
        self.adjoints.get(var.0).and_then(Option::as_ref)
    }

    fn push(&mut self, op: Op, value: Tensor) -> Result<Var> {
        if cfg!(debug_assertions) {
            value.validate(op.name())?;
        }
        let needs_grad = match &op {
            Op::Param => true,
            Op::Constant => false,
            other => inputs_of(other).iter().any(|v| self.nodes[v.0].needs_grad),
        };
        self.nodes.push(Node { op, value, needs_grad });
        Ok(Var(self.nodes.len() - 1))
    }

    /// Trainable leaf.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.nodes.push(Node {
            op: Op::Param,
            value,
            needs_grad: true,
        });
        Var(self.nodes.len() - 1)
    }

    /// Non-trainable leaf.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.nodes.push(Node {
            op: Op::Constant,
            value,
            needs_grad: false,
        });
        Var(self.nodes.len() - 1)
    }

    fn dims(&self, v: Var) -> (usize, usize) {
        let t = &self.nodes[v.0].value;
        (t.rows(), t.cols())
    }

    fn shape_err(&self, op: &'static str, a: Var, b: Var, detail: &str) -> NumError {
        NumError::shape(op, self.value(a).shape(), self.value(b).shape(), detail)
    }

    // ------------------------------------------------------------------
    // Linear algebra
    // ------------------------------------------------------------------

    /// `[m,k] x [k,n] -> [m,n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.dims(a);
        let (k2, n) = self.dims(b);
        if k != k2 {
            return Err(self.shape_err("matmul", a, b, "inner dimensions differ"));
        }
        let mut out = vec![0.0; m * n];
        gemm::gemm(m, k, n, self.value(a).data(), false, self.value(b).data(), false, &mut out, 0.0);
        let t = Tensor::matrix(m, n, out)?;
        self.push(Op::MatMul(a, b), t)
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let t = self.value(a).transpose();
        self.push(Op::Transpose(a), t)
    }

    // ------------------------------------------------------------------
    // Elementwise
    // ------------------------------------------------------------------

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let t = self.value(a).zip_map(self.value(b), "add", |x, y| x + y)?;
        self.push(Op::Add(a, b), t)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let t = self.value(a).zip_map(self.value(b), "sub", |x, y| x - y)?;
        self.push(Op::Sub(a, b), t)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let t = self.value(a).zip_map(self.value(b), "mul", |x, y| x * y)?;
        self.push(Op::Mul(a, b), t)
    }

    /// Adds a length-`n` bias to every row of an `[m,n]` matrix.
    pub fn add_row(&mut self, a: Var, bias: Var) -> Result<Var> {
        let (m, n) = self.dims(a);
        if self.value(bias).len() != n {
            return Err(self.shape_err("add_row", a, bias, "bias length must equal column count"));
        }
        let mut out = self.value(a).data().to_vec();
        let b = self.value(bias).data();
        for i in 0..m {
            for (o, &bv) in out[i * n..(i + 1) * n].iter_mut().zip(b) {
                *o += bv;
            }
        }
        let t = Tensor::new(self.value(a).shape().to_vec(), out)?;
        self.push(Op::AddRow(a, bias), t)
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Result<Var> {
        let t = self.value(a).map(|x| x * s);
        self.push(Op::Scale(a, s), t)
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        let t = self.value(a).map(|x| if x > 0.0 { x } else { 0.0 });
        self.push(Op::Relu(a), t)
    }

    /// Tanh-approximated GELU.
    pub fn gelu(&mut self, a: Var) -> Result<Var> {
        let t = self.value(a).map(|x| gelu_parts(x).0);
        self.push(Op::Gelu(a), t)
    }

    // ------------------------------------------------------------------
    // Normalization and attention
    // ------------------------------------------------------------------

    /// Row-wise softmax over the trailing dimension.
    pub fn softmax(&mut self, a: Var) -> Result<Var> {
        let x = self.value(a);
        let (m, n) = (x.rows(), x.cols());
        let mut out = x.data().to_vec();
        for i in 0..m {
            softmax_in_place(&mut out[i * n..(i + 1) * n]);
        }
        let t = Tensor::new(x.shape().to_vec(), out)?;
        self.push(Op::Softmax(a), t)
    }

    /// Row-wise layer normalization with affine `gamma`, `beta` of length `n`.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var, eps: f64) -> Result<Var> {
        let (m, n) = self.dims(x);
        if self.value(gamma).len() != n || self.value(beta).len() != n {
            return Err(self.shape_err("layer_norm", x, gamma, "gamma/beta length must equal column count"));
        }
        let xv = self.value(x).data();
        let g = self.value(gamma).data();
        let b = self.value(beta).data();
        let mut xhat = vec![0.0; m * n];
        let mut rstd = vec![0.0; m];
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let row = &xv[i * n..(i + 1) * n];
            let mean = row.iter().sum::<f64>() / n as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
            let r = 1.0 / (var + eps).sqrt();
            rstd[i] = r;
            for j in 0..n {
                let h = (row[j] - mean) * r;
                xhat[i * n + j] = h;
                out[i * n + j] = h * g[j] + b[j];
            }
        }
        let t = Tensor::new(self.value(x).shape().to_vec(), out)?;
        self.push(
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                rstd,
            },
            t,
        )
    }

    /// Multi-head causal self-attention over packed sequences.
    ///
    /// `q`, `k`, `v` are `[N, d]` with rows grouped into `segments`
    /// (`(start, len)` pairs that tile `0..N` in order). A row attends to
    /// rows of its own segment at or before its position.
    pub fn causal_attention(&mut self, q: Var, k: Var, v: Var, heads: usize, segments: &[(usize, usize)]) -> Result<Var> {
        let (n_rows, d) = self.dims(q);
        if self.dims(k) != (n_rows, d) || self.dims(v) != (n_rows, d) {
            return Err(self.shape_err("causal_attention", q, k, "q, k and v must share a shape"));
        }
        if heads == 0 || d % heads != 0 {
            return Err(NumError::shape(
                "causal_attention",
                self.value(q).shape(),
                &[heads],
                "model width must be divisible by the head count",
            ));
        }
        check_segments(segments, n_rows)?;
        let dh = d / heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let (qd, kd, vd) = (self.value(q).data(), self.value(k).data(), self.value(v).data());
        let mut out = vec![0.0; n_rows * d];
        let mut probs = Vec::with_capacity(segments.len() * heads);
        for &(start, len) in segments {
            for h in 0..heads {
                let off = start * d + h * dh;
                let mut s = vec![0.0; len * len];
                gemm::strided(len, dh, len, &qd[off..], d, 1, &kd[off..], 1, d, &mut s, len, 1, 0.0);
                for i in 0..len {
                    let row = &mut s[i * len..(i + 1) * len];
                    for x in row[..=i].iter_mut() {
                        *x *= scale;
                    }
                    softmax_in_place(&mut row[..=i]);
                    for x in row[i + 1..].iter_mut() {
                        *x = 0.0;
                    }
                }
                gemm::strided(len, len, dh, &s, len, 1, &vd[off..], d, 1, &mut out[off..], d, 1, 0.0);
                probs.push(s);
            }
        }
        let t = Tensor::matrix(n_rows, d, out)?;
        self.push(
            Op::Attention {
                q,
                k,
                v,
                heads,
                segments: segments.to_vec(),
                probs,
            },
            t,
        )
    }

    // ------------------------------------------------------------------
    // Indexing and reshaping
    // ------------------------------------------------------------------

    /// Embedding lookup: rows `ids` of a `[V, d]` table.
    pub fn index_rows(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        let (v, d) = self.dims(table);
        if ids.is_empty() {
            return Err(NumError::InvalidShape {
                op: "index_rows",
                shape: vec![0, d],
            });
        }
        let src = self.value(table).data();
        let mut out = Vec::with_capacity(ids.len() * d);
        for &id in ids {
            if id >= v {
                return Err(NumError::IndexOutOfRange {
                    op: "index_rows",
                    index: id,
                    bound: v,
                });
            }
            out.extend_from_slice(&src[id * d..(id + 1) * d]);
        }
        let t = Tensor::matrix(ids.len(), d, out)?;
        self.push(Op::IndexRows { table, ids: ids.to_vec() }, t)
    }

    /// Picks one column per row: `out[i] = x[i, cols[i]]`, shape `[m, 1]`.
    pub fn gather_cols(&mut self, x: Var, cols: &[usize]) -> Result<Var> {
        let (m, n) = self.dims(x);
        if cols.len() != m {
            return Err(NumError::shape(
                "gather_cols",
                self.value(x).shape(),
                &[cols.len()],
                "one column index per row",
            ));
        }
        let src = self.value(x).data();
        let mut out = Vec::with_capacity(m);
        for (i, &c) in cols.iter().enumerate() {
            if c >= n {
                return Err(NumError::IndexOutOfRange {
                    op: "gather_cols",
                    index: c,
                    bound: n,
                });
            }
            out.push(src[i * n + c]);
        }
        let t = Tensor::matrix(m, 1, out)?;
        self.push(Op::GatherCols { x, cols: cols.to_vec() }, t)
    }

    /// Columns `start..end` of an `[m,n]` matrix.
    pub fn slice_cols(&mut self, x: Var, start: usize, end: usize) -> Result<Var> {
        let (m, n) = self.dims(x);
        if start >= end || end > n {
            return Err(NumError::shape(
                "slice_cols",
                self.value(x).shape(),
                &[start, end],
                "empty or out-of-range slice",
            ));
        }
        let w = end - start;
        let src = self.value(x).data();
        let mut out = Vec::with_capacity(m * w);
        for i in 0..m {
            out.extend_from_slice(&src[i * n + start..i * n + end]);
        }
        let t = Tensor::matrix(m, w, out)?;
        self.push(Op::SliceCols { x, start }, t)
    }

    /// Rows `start..end` of an `[m,n]` matrix.
    pub fn slice_rows(&mut self, x: Var, start: usize, end: usize) -> Result<Var> {
        let (m, n) = self.dims(x);
        if start >= end || end > m {
            return Err(NumError::shape(
                "slice_rows",
                self.value(x).shape(),
                &[start, end],
                "empty or out-of-range slice",
            ));
        }
        let t = Tensor::matrix(end - start, n, self.value(x).data()[start * n..end * n].to_vec())?;
        self.push(Op::SliceRows { x, start }, t)
    }

    /// Side-by-side concatenation of matrices with equal row counts.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts.first().ok_or(NumError::InvalidShape {
            op: "concat_cols",
            shape: vec![],
        })?;
        let m = self.dims(first).0;
        let mut total = 0;
        for &p in parts {
            if self.dims(p).0 != m {
                return Err(self.shape_err("concat_cols", first, p, "row counts differ"));
            }
            total += self.dims(p).1;
        }
        let mut out = Vec::with_capacity(m * total);
        for i in 0..m {
            for &p in parts {
                out.extend_from_slice(self.value(p).row(i));
            }
        }
        let t = Tensor::matrix(m, total, out)?;
        self.push(Op::ConcatCols(parts.to_vec()), t)
    }

    /// Vertical concatenation of matrices with equal column counts.
    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts.first().ok_or(NumError::InvalidShape {
            op: "concat_rows",
            shape: vec![],
        })?;
        let n = self.dims(first).1;
        let mut out = Vec::new();
        let mut rows = 0;
        for &p in parts {
            if self.dims(p).1 != n {
                return Err(self.shape_err("concat_rows", first, p, "column counts differ"));
            }
            rows += self.dims(p).0;
            out.extend_from_slice(self.value(p).data());
        }
        let t = Tensor::matrix(rows, n, out)?;
        self.push(Op::ConcatRows(parts.to_vec()), t)
    }

    /// Subtracts each column's mean over rows.
    pub fn center_cols(&mut self, x: Var) -> Result<Var> {
        let (m, n) = self.dims(x);
        let means = col_means(self.value(x).data(), m, n);
        let mut out = self.value(x).data().to_vec();
        for i in 0..m {
            for j in 0..n {
                out[i * n + j] -= means[j];
            }
        }
        let t = Tensor::matrix(m, n, out)?;
        self.push(Op::CenterCols(x), t)
    }

    // ------------------------------------------------------------------
    // Reductions and losses (scalar outputs)
    // ------------------------------------------------------------------

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let s = self.value(x).sum();
        self.push(Op::Sum(x), Tensor::scalar(s))
    }

    pub fn mean(&mut self, x: Var) -> Result<Var> {
        let n = self.value(x).len() as f64;
        let s = self.sum(x)?;
        self.scale(s, 1.0 / n)
    }

    pub fn sum_squares(&mut self, x: Var) -> Result<Var> {
        let s = self.value(x).data().iter().map(|v| v * v).sum();
        self.push(Op::SumSquares(x), Tensor::scalar(s))
    }

    /// Sum of absolute values.
    pub fn l1(&mut self, x: Var) -> Result<Var> {
        let s = self.value(x).data().iter().map(|v| v.abs()).sum();
        self.push(Op::L1(x), Tensor::scalar(s))
    }

    /// Mean squared error over all elements.
    pub fn mse(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.shape() != bv.shape() {
            return Err(self.shape_err("mse", a, b, "shapes must match"));
        }
        let n = av.len() as f64;
        let s: f64 = av.data().iter().zip(bv.data()).map(|(x, y)| (x - y) * (x - y)).sum();
        self.push(Op::Mse(a, b), Tensor::scalar(s / n))
    }

    /// Mean negative log-softmax at the target index of each row of
    /// `logits`; rows whose target is `None` are masked out.
    ///
    /// With every row masked the loss is 0.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[Option<usize>]) -> Result<Var> {
        let (m, n) = self.dims(logits);
        if targets.len() != m {
            return Err(NumError::shape(
                "cross_entropy",
                self.value(logits).shape(),
                &[targets.len()],
                "one target per row",
            ));
        }
        let x = self.value(logits).data();
        let mut probs = vec![0.0; m * n];
        let mut total = 0.0;
        let mut count = 0;
        for (i, t) in targets.iter().enumerate() {
            let Some(t) = *t else { continue };
            if t >= n {
                return Err(NumError::IndexOutOfRange {
                    op: "cross_entropy",
                    index: t,
                    bound: n,
                });
            }
            let row = &x[i * n..(i + 1) * n];
            let p = &mut probs[i * n..(i + 1) * n];
            p.copy_from_slice(row);
            let lse = log_sum_exp(row);
            softmax_in_place(p);
            total += lse - row[t];
            count += 1;
        }
        let loss = if count == 0 { 0.0 } else { total / count as f64 };
        self.push(
            Op::CrossEntropy {
                logits,
                targets: targets.to_vec(),
                probs,
                count,
            },
            Tensor::scalar(loss),
        )
    }

    /// `-log softmax(logits)[target]` for a single row of logits.
    pub fn cross_entropy_with_index(&mut self, logits: Var, target: usize) -> Result<Var> {
        if self.dims(logits).0 != 1 {
            return Err(NumError::shape(
                "cross_entropy_with_index",
                self.value(logits).shape(),
                &[1],
                "expected a single row of logits",
            ));
        }
        self.cross_entropy(logits, &[Some(target)])
    }

    // ------------------------------------------------------------------
    // Backward
    // ------------------------------------------------------------------

    /// Reverse pass from a scalar `loss`; returns adjoints of all params.
    pub fn backward(&mut self, loss: Var) -> Result<Gradients> {
        let lv = self.value(loss);
        if lv.len() != 1 {
            return Err(NumError::NotScalar {
                shape: lv.shape().to_vec(),
            });
        }
        let n_nodes = self.nodes.len();
        let mut adj: Vec<Option<Vec<f64>>> = vec![None; n_nodes];
        adj[loss.0] = Some(vec![1.0]);
        for idx in (0..=loss.0).rev() {
            if !self.nodes[idx].needs_grad {
                continue;
            }
            let Some(g) = adj[idx].take() else { continue };
            self.propagate(idx, &g, &mut adj)?;
            adj[idx] = Some(g);
        }
        let mut grads = vec![None; n_nodes];
        let mut adjoints = vec![None; n_nodes];
        for (i, a) in adj.into_iter().enumerate() {
            if let Some(a) = a {
                let t = Tensor::new(self.nodes[i].value.shape().to_vec(), a)?;
                if matches!(self.nodes[i].op, Op::Param) {
                    grads[i] = Some(t.clone());
                }
                adjoints[i] = Some(t);
            }
        }
        self.adjoints = adjoints;
        Ok(Gradients { grads })
    }

    fn propagate(&self, idx: usize, g: &[f64], adj: &mut [Option<Vec<f64>>]) -> Result<()> {
        let node = &self.nodes[idx];
        let out = &node.value;
        let wants = |v: &Var| self.nodes[v.0].needs_grad;
        match &node.op {
            Op::Param | Op::Constant => {}
            Op::MatMul(a, b) => {
                let (m, k) = self.dims(*a);
                let n = self.dims(*b).1;
                if wants(a) {
                    let buf = slot(adj, *a, m * k);
                    gemm::gemm(m, n, k, g, false, self.value(*b).data(), true, buf, 1.0);
                }
                if wants(b) {
                    let buf = slot(adj, *b, k * n);
                    gemm::gemm(k, m, n, self.value(*a).data(), true, g, false, buf, 1.0);
                }
            }
            Op::Transpose(a) => {
                if wants(a) {
                    let (r, c) = self.dims(*a);
                    let buf = slot(adj, *a, r * c);
                    for i in 0..r {
                        for j in 0..c {
                            buf[i * c + j] += g[j * r + i];
                        }
                    }
                }
            }
            Op::Add(a, b) => {
                for v in [a, b] {
                    if wants(v) {
                        axpy(slot(adj, *v, g.len()), g, 1.0);
                    }
                }
            }
            Op::Sub(a, b) => {
                if wants(a) {
                    axpy(slot(adj, *a, g.len()), g, 1.0);
                }
                if wants(b) {
                    axpy(slot(adj, *b, g.len()), g, -1.0);
                }
            }
            Op::Mul(a, b) => {
                if wants(a) {
                    let bv = self.value(*b).data();
                    for (o, (gi, bi)) in slot(adj, *a, g.len()).iter_mut().zip(g.iter().zip(bv)) {
                        *o += gi * bi;
                    }
                }
                if wants(b) {
                    let av = self.value(*a).data();
                    for (o, (gi, ai)) in slot(adj, *b, g.len()).iter_mut().zip(g.iter().zip(av)) {
                        *o += gi * ai;
                    }
                }
            }
            Op::AddRow(a, bias) => {
                if wants(a) {
                    axpy(slot(adj, *a, g.len()), g, 1.0);
                }
                if wants(bias) {
                    let n = self.value(*bias).len();
                    let buf = slot(adj, *bias, n);
                    for row in g.chunks_exact(n) {
                        for (o, gi) in buf.iter_mut().zip(row) {
                            *o += gi;
                        }
                    }
                }
            }
            Op::Scale(a, s) => {
                if wants(a) {
                    axpy(slot(adj, *a, g.len()), g, *s);
                }
            }
            Op::Relu(a) => {
                if wants(a) {
                    let x = self.value(*a).data();
                    for (o, (gi, xi)) in slot(adj, *a, g.len()).iter_mut().zip(g.iter().zip(x)) {
                        if *xi > 0.0 {
                            *o += gi;
                        }
                    }
                }
            }
            Op::Gelu(a) => {
                if wants(a) {
                    let x = self.value(*a).data();
                    for (o, (gi, xi)) in slot(adj, *a, g.len()).iter_mut().zip(g.iter().zip(x)) {
                        *o += gi * gelu_parts(*xi).1;
                    }
                }
            }
            Op::Softmax(a) => {
                if wants(a) {
                    let n = out.cols();
                    let y = out.data();
                    let buf = slot(adj, *a, g.len());
                    for ((brow, grow), yrow) in buf.chunks_exact_mut(n).zip(g.chunks_exact(n)).zip(y.chunks_exact(n)) {
                        let dot: f64 = grow.iter().zip(yrow).map(|(p, q)| p * q).sum();
                        for j in 0..n {
                            brow[j] += yrow[j] * (grow[j] - dot);
                        }
                    }
                }
            }
            Op::CrossEntropy {
                logits,
                targets,
                probs,
                count,
            } => {
                if wants(logits) && *count > 0 {
                    let n = self.dims(*logits).1;
                    let coef = g[0] / *count as f64;
                    let buf = slot(adj, *logits, probs.len());
                    for (i, t) in targets.iter().enumerate() {
                        let Some(t) = *t else { continue };
                        for j in 0..n {
                            buf[i * n + j] += coef * probs[i * n + j];
                        }
                        buf[i * n + t] -= coef;
                    }
                }
            }
            Op::Mse(a, b) => {
                let av = self.value(*a).data();
                let bv = self.value(*b).data();
                let coef = 2.0 * g[0] / av.len() as f64;
                if wants(a) {
                    for (o, (x, y)) in slot(adj, *a, av.len()).iter_mut().zip(av.iter().zip(bv)) {
                        *o += coef * (x - y);
                    }
                }
                if wants(b) {
                    for (o, (x, y)) in slot(adj, *b, av.len()).iter_mut().zip(av.iter().zip(bv)) {
                        *o -= coef * (x - y);
                    }
                }
            }
            Op::L1(a) => {
                if wants(a) {
                    let x = self.value(*a).data();
                    for (o, xi) in slot(adj, *a, x.len()).iter_mut().zip(x) {
                        if *xi > 0.0 {
                            *o += g[0];
                        } else if *xi < 0.0 {
                            *o -= g[0];
                        }
                    }
                }
            }
            Op::Sum(a) => {
                if wants(a) {
                    let n = self.value(*a).len();
                    for o in slot(adj, *a, n).iter_mut() {
                        *o += g[0];
                    }
                }
            }
            Op::SumSquares(a) => {
                if wants(a) {
                    let x = self.value(*a).data();
                    for (o, xi) in slot(adj, *a, x.len()).iter_mut().zip(x) {
                        *o += 2.0 * g[0] * xi;
                    }
                }
            }
            Op::CenterCols(a) => {
                if wants(a) {
                    let (m, n) = self.dims(*a);
                    let means = col_means(g, m, n);
                    let buf = slot(adj, *a, m * n);
                    for i in 0..m {
                        for j in 0..n {
                            buf[i * n + j] += g[i * n + j] - means[j];
                        }
                    }
                }
            }
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                rstd,
            } => {
                let (m, n) = self.dims(*x);
                let gv = self.value(*gamma).data();
                if wants(gamma) {
                    let buf = slot(adj, *gamma, n);
                    for i in 0..m {
                        for j in 0..n {
                            buf[j] += g[i * n + j] * xhat[i * n + j];
                        }
                    }
                }
                if wants(beta) {
                    let buf = slot(adj, *beta, n);
                    for row in g.chunks_exact(n) {
                        for (o, gi) in buf.iter_mut().zip(row) {
                            *o += gi;
                        }
                    }
                }
                if wants(x) {
                    let buf = slot(adj, *x, m * n);
                    let mut dxhat = vec![0.0; n];
                    for i in 0..m {
                        let mut mean_d = 0.0;
                        let mut mean_dx = 0.0;
                        for j in 0..n {
                            let d = g[i * n + j] * gv[j];
                            dxhat[j] = d;
                            mean_d += d;
                            mean_dx += d * xhat[i * n + j];
                        }
                        mean_d /= n as f64;
                        mean_dx /= n as f64;
                        for j in 0..n {
                            buf[i * n + j] += rstd[i] * (dxhat[j] - mean_d - xhat[i * n + j] * mean_dx);
                        }
                    }
                }
            }
            Op::IndexRows { table, ids } => {
                if wants(table) {
                    let (v, d) = self.dims(*table);
                    let buf = slot(adj, *table, v * d);
                    for (r, &id) in ids.iter().enumerate() {
                        for (o, gi) in buf[id * d..(id + 1) * d].iter_mut().zip(&g[r * d..(r + 1) * d]) {
                            *o += gi;
                        }
                    }
                }
            }
            Op::GatherCols { x, cols } => {
                if wants(x) {
                    let (m, n) = self.dims(*x);
                    let buf = slot(adj, *x, m * n);
                    for (i, &c) in cols.iter().enumerate() {
                        buf[i * n + c] += g[i];
                    }
                }
            }
            Op::SliceCols { x, start } => {
                if wants(x) {
                    let (m, n) = self.dims(*x);
                    let w = out.cols();
                    let buf = slot(adj, *x, m * n);
                    for i in 0..m {
                        for j in 0..w {
                            buf[i * n + start + j] += g[i * w + j];
                        }
                    }
                }
            }
            Op::SliceRows { x, start } => {
                if wants(x) {
                    let (m, n) = self.dims(*x);
                    let buf = slot(adj, *x, m * n);
                    axpy(&mut buf[start * n..start * n + g.len()], g, 1.0);
                }
            }
            Op::ConcatCols(parts) => {
                let m = out.rows();
                let total = out.cols();
                let mut col = 0;
                for p in parts {
                    let w = self.dims(*p).1;
                    if wants(p) {
                        let buf = slot(adj, *p, m * w);
                        for i in 0..m {
                            for j in 0..w {
                                buf[i * w + j] += g[i * total + col + j];
                            }
                        }
                    }
                    col += w;
                }
            }
            Op::ConcatRows(parts) => {
                let mut off = 0;
                for p in parts {
                    let len = self.value(*p).len();
                    if wants(p) {
                        axpy(slot(adj, *p, len), &g[off..off + len], 1.0);
                    }
                    off += len;
                }
            }
            Op::Attention {
                q,
                k,
                v,
                heads,
                segments,
                probs,
            } => self.attention_backward(g, *q, *k, *v, *heads, segments, probs, adj),
        }
        Ok(())
    }

    #[allow(clippy::too_many_arguments)]
    fn attention_backward(
        &self,
        g: &[f64],
        q: Var,
        k: Var,
        v: Var,
        heads: usize,
        segments: &[(usize, usize)],
        probs: &[Vec<f64>],
        adj: &mut [Option<Vec<f64>>],
    ) {
        let (n_rows, d) = self.dims(q);
        let dh = d / heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let (qd, kd, vd) = (self.value(q).data(), self.value(k).data(), self.value(v).data());
        let mut dq = vec![0.0; n_rows * d];
        let mut dk = vec![0.0; n_rows * d];
        let mut dv = vec![0.0; n_rows * d];
        let mut pi = 0;
        for &(start, len) in segments {
            for h in 0..heads {
                let p = &probs[pi];
                pi += 1;
                let off = start * d + h * dh;
                // dP = dO V^T
                let mut dp = vec![0.0; len * len];
                gemm::strided(len, dh, len, &g[off..], d, 1, &vd[off..], 1, d, &mut dp, len, 1, 0.0);
                // dV += P^T dO
                gemm::strided(len, len, dh, p, 1, len, &g[off..], d, 1, &mut dv[off..], d, 1, 1.0);
                // dS = P * (dP - rowsum(dP * P)), masked entries have P = 0
                for i in 0..len {
                    let prow = &p[i * len..(i + 1) * len];
                    let drow = &mut dp[i * len..(i + 1) * len];
                    let dot: f64 = prow[..=i].iter().zip(&drow[..=i]).map(|(a, b)| a * b).sum();
                    for j in 0..len {
                        drow[j] = if j <= i { prow[j] * (drow[j] - dot) * scale } else { 0.0 };
                    }
                }
                gemm::strided(len, len, dh, &dp, len, 1, &kd[off..], d, 1, &mut dq[off..], d, 1, 1.0);
                gemm::strided(len, len, dh, &dp, 1, len, &qd[off..], d, 1, &mut dk[off..], d, 1, 1.0);
            }
        }
        for (var, buf) in [(q, dq), (k, dk), (v, dv)] {
            if self.nodes[var.0].needs_grad {
                axpy(slot(adj, var, n_rows * d), &buf, 1.0);
            }
        }
    }
}

fn inputs_of(op: &Op) -> Vec<Var> {
    match op {
        Op::Param | Op::Constant => vec![],
        Op::MatMul(a, b) | Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) | Op::AddRow(a, b) | Op::Mse(a, b) => {
            vec![*a, *b]
        }
        Op::Transpose(a)
        | Op::Scale(a, _)
        | Op::Relu(a)
        | Op::Gelu(a)
        | Op::Softmax(a)
        | Op::L1(a)
        | Op::Sum(a)
        | Op::SumSquares(a)
        | Op::CenterCols(a) => vec![*a],
        Op::CrossEntropy { logits, .. } => vec![*logits],
        Op::LayerNorm { x, gamma, beta, .. } => vec![*x, *gamma, *beta],
        Op::IndexRows { table, .. } => vec![*table],
        Op::Attention { q, k, v, .. } => vec![*q, *k, *v],
        Op::ConcatCols(p) | Op::ConcatRows(p) => p.clone(),
        Op::SliceCols { x, .. } | Op::SliceRows { x, .. } | Op::GatherCols { x, .. } => vec![*x],
    }
}

fn slot(adj: &mut [Option<Vec<f64>>], v: Var, len: usize) -> &mut [f64] {
    adj[v.0].get_or_insert_with(|| vec![0.0; len]).as_mut_slice()
}

fn axpy(dst: &mut [f64], src: &[f64], a: f64) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += a * s;
    }
}

fn col_means(x: &[f64], m: usize, n: usize) -> Vec<f64> {
    let mut means = vec![0.0; n];
    for row in x.chunks_exact(n) {
        for (acc, v) in means.iter_mut().zip(row) {
            *acc += v;
        }
    }
    for v in means.iter_mut() {
        *v /= m as f64;
    }
    means
}

fn check_segments(segments: &[(usize, usize)], n_rows: usize) -> Result<()> {
    let mut next = 0;
    for &(start, len) in segments {
        if start != next || len == 0 {
            return Err(NumError::Segments { rows: n_rows });
        }
        next += len;
    }
    if next != n_rows {
        return Err(NumError::Segments { rows: n_rows });
    }
    Ok(())
}

/// Numerically stable `log(sum(exp(x)))`.
pub fn log_sum_exp(x: &[f64]) -> f64 {
    let max = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    max + x.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// In-place numerically stable softmax.
pub fn softmax_in_place(x: &mut [f64]) {
    let max = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for v in x.iter_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    for v in x.iter_mut() {
        *v /= total;
    }
}
