// SPDX-License-Identifier: MIT OR Apache-2.0

//! Thin wrapper over `matrixmultiply::dgemm` for contiguous row-major buffers.

/// `c = beta * c + op(a) * op(b)` where `op(a)` is `[m,k]` and `op(b)` is `[k,n]`.
///
/// With `trans_a`, `a` is stored as a row-major `[k,m]` buffer (likewise
/// `trans_b` with `[n,k]`). `c` is row-major `[m,n]`.
#[allow(clippy::too_many_arguments)]
pub fn gemm(m: usize, k: usize, n: usize, a: &[f64], trans_a: bool, b: &[f64], trans_b: bool, c: &mut [f64], beta: f64) {
    assert_eq!(a.len(), m * k, "gemm: lhs buffer length");
    assert_eq!(b.len(), k * n, "gemm: rhs buffer length");
    assert_eq!(c.len(), m * n, "gemm: output buffer length");
    let (rsa, csa) = if trans_a { (1, m) } else { (k, 1) };
    let (rsb, csb) = if trans_b { (1, k) } else { (n, 1) };
    strided(m, k, n, a, rsa, csa, b, rsb, csb, c, n, 1, beta);
}

/// General strided product; strides are in elements.
#[allow(clippy::too_many_arguments)]
pub fn strided(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    rsa: usize,
    csa: usize,
    b: &[f64],
    rsb: usize,
    csb: usize,
    c: &mut [f64],
    rsc: usize,
    csc: usize,
    beta: f64,
) {
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        for i in 0..m {
            for j in 0..n {
                c[i * rsc + j * csc] *= beta;
            }
        }
        return;
    }
    let last_a = (m - 1) * rsa + (k - 1) * csa;
    let last_b = (k - 1) * rsb + (n - 1) * csb;
    let last_c = (m - 1) * rsc + (n - 1) * csc;
    assert!(last_a < a.len() && last_b < b.len() && last_c < c.len(), "gemm: view out of bounds");
    // SAFETY: the asserts above keep every strided access inside the slices,
    // and `c` is uniquely borrowed.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            rsc as isize,
            csc as isize,
        );
    }
}
