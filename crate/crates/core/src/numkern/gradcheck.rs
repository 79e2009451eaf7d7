// SPDX-License-Identifier: MIT OR Apache-2.0

//! Central finite-difference gradients, used as an independent oracle for
//! the analytic backward pass. Only forward evaluations are involved.

use super::Tensor;

/// Numerical gradient of `f` at each parameter tensor.
///
/// `f` receives the full parameter list (with one entry perturbed) and
/// returns the scalar loss.
pub fn numeric_grads(params: &[Tensor], step: f64, mut f: impl FnMut(&[Tensor]) -> f64) -> Vec<Tensor> {
    let mut work: Vec<Tensor> = params.to_vec();
    let mut out = Vec::with_capacity(params.len());
    for pi in 0..params.len() {
        let mut g = vec![0.0; params[pi].len()];
        for (i, gi) in g.iter_mut().enumerate() {
            let orig = params[pi].data()[i];
            work[pi].data_mut()[i] = orig + step;
            let up = f(&work);
            work[pi].data_mut()[i] = orig - step;
            let down = f(&work);
            work[pi].data_mut()[i] = orig;
            *gi = (up - down) / (2.0 * step);
        }
        out.push(Tensor::new(params[pi].shape().to_vec(), g).expect("shape preserved"));
    }
    out
}

/// Largest relative error between two gradient sets, with `floor` guarding
/// the denominator for near-zero entries:
/// `|a - b| / max(|a|, |b|, floor)`.
pub fn max_relative_error(analytic: &[Tensor], numeric: &[Tensor], floor: f64) -> f64 {
    let mut worst: f64 = 0.0;
    for (a, n) in analytic.iter().zip(numeric) {
        for (&x, &y) in a.data().iter().zip(n.data()) {
            let denom = x.abs().max(y.abs()).max(floor);
            worst = worst.max((x - y).abs() / denom);
        }
    }
    worst
}
