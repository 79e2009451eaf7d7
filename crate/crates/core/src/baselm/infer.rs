// SPDX-License-Identifier: MIT OR Apache-2.0

//! Key/value-cached greedy decoding. Numerically the same network as the
//! training graph, evaluated position by position without a tape.

use super::model::{Hook, LMParams, PER_LAYER};
use super::vocab::EOS;
use super::{LmError, Result};
use crate::numkern::{argmax, gelu_parts, gemm, softmax_in_place};

struct SeqState<'a> {
    len: usize,
    prompt_end: usize,
    hook: Option<&'a dyn Hook>,
    /// Per layer, `[len, d]` keys and values.
    keys: Vec<Vec<f64>>,
    values: Vec<Vec<f64>>,
}

fn layer_norm_rows(x: &[f64], g: &[f64], b: &[f64], d: usize, out: &mut [f64]) {
    for (row, o) in x.chunks_exact(d).zip(out.chunks_exact_mut(d)) {
        let mean = row.iter().sum::<f64>() / d as f64;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
        let r = 1.0 / (var + 1e-5).sqrt();
        for j in 0..d {
            o[j] = (row[j] - mean) * r * g[j] + b[j];
        }
    }
}

/// `out = x w + bias` for `x [n, k]`, `w [k, m]`.
fn affine(x: &[f64], n: usize, k: usize, w: &[f64], bias: &[f64], out: &mut Vec<f64>) {
    let m = bias.len();
    out.clear();
    for _ in 0..n {
        out.extend_from_slice(bias);
    }
    gemm::gemm(n, k, m, x, false, w, false, out, 1.0);
}

/// Run `rows[i]` new tokens for each live sequence through the network,
/// extending the caches. Returns the final hidden state (post final norm)
/// of each sequence's last new row.
fn extend(params: &LMParams, states: &mut [SeqState<'_>], new: &[(usize, Vec<usize>)]) -> Vec<Vec<f64>> {
    let cfg = &params.config;
    let t = &params.tensors;
    let (d, heads) = (cfg.d_model, cfg.n_heads);
    let dh = d / heads;
    let scale = 1.0 / (dh as f64).sqrt();
    let n: usize = new.iter().map(|(_, toks)| toks.len()).sum();
    let mut x = Vec::with_capacity(n * d);
    for (si, toks) in new {
        let start = states[*si].len;
        for (o, &tok) in toks.iter().enumerate() {
            let e = &t[0].data()[tok * d..(tok + 1) * d];
            let p = &t[1].data()[(start + o) * d..(start + o + 1) * d];
            x.extend(e.iter().zip(p).map(|(a, b)| a + b));
        }
    }
    let mut a = vec![0.0; n * d];
    let (mut q, mut k, mut v, mut o, mut f1, mut f2) = (Vec::new(), Vec::new(), Vec::new(), Vec::new(), Vec::new(), Vec::new());
    let mut att = vec![0.0; n * d];
    for l in 0..cfg.n_layers {
        // Hooks edit the input residual of block l.
        let mut row0 = 0;
        for (si, toks) in new {
            let st = &states[*si];
            if let Some(h) = st.hook.filter(|h| h.layer() == l) {
                for off in 0..toks.len() {
                    let r = row0 + off;
                    h.apply(st.len + off, st.prompt_end, &mut x[r * d..(r + 1) * d]);
                }
            }
            row0 += toks.len();
        }
        let p = &t[2 + l * PER_LAYER..2 + (l + 1) * PER_LAYER];
        layer_norm_rows(&x, p[0].data(), p[1].data(), d, &mut a);
        affine(&a, n, d, p[2].data(), p[3].data(), &mut q);
        affine(&a, n, d, p[4].data(), p[5].data(), &mut k);
        affine(&a, n, d, p[6].data(), p[7].data(), &mut v);
        let mut row0 = 0;
        for (si, toks) in new {
            let st = &mut states[*si];
            let m = toks.len();
            st.keys[l].extend_from_slice(&k[row0 * d..(row0 + m) * d]);
            st.values[l].extend_from_slice(&v[row0 * d..(row0 + m) * d]);
            let total = st.len + m;
            let (ks, vs) = (&st.keys[l], &st.values[l]);
            let mut s = vec![0.0; total];
            for off in 0..m {
                let r = row0 + off;
                let upto = st.len + off + 1;
                for h in 0..heads {
                    let qh = &q[r * d + h * dh..r * d + (h + 1) * dh];
                    for (j, sj) in s[..upto].iter_mut().enumerate() {
                        let kh = &ks[j * d + h * dh..j * d + (h + 1) * dh];
                        *sj = qh.iter().zip(kh).map(|(a, b)| a * b).sum::<f64>() * scale;
                    }
                    softmax_in_place(&mut s[..upto]);
                    let out = &mut att[r * d + h * dh..r * d + (h + 1) * dh];
                    out.fill(0.0);
                    for (j, &w) in s[..upto].iter().enumerate() {
                        let vh = &vs[j * d + h * dh..j * d + (h + 1) * dh];
                        for (o, vv) in out.iter_mut().zip(vh) {
                            *o += w * vv;
                        }
                    }
                }
            }
            row0 += m;
        }
        affine(&att, n, d, p[8].data(), p[9].data(), &mut o);
        for (xi, oi) in x.iter_mut().zip(&o) {
            *xi += oi;
        }
        layer_norm_rows(&x, p[10].data(), p[11].data(), d, &mut a);
        let ff = cfg.d_ff;
        affine(&a, n, d, p[12].data(), p[13].data(), &mut f1);
        for z in f1.iter_mut() {
            *z = gelu_parts(*z).0;
        }
        affine(&f1, n, ff, p[14].data(), p[15].data(), &mut f2);
        for (xi, fi) in x.iter_mut().zip(&f2) {
            *xi += fi;
        }
    }
    let base = 2 + cfg.n_layers * PER_LAYER;
    let mut out = Vec::with_capacity(new.len());
    let mut row0 = 0;
    for (si, toks) in new {
        let r = row0 + toks.len() - 1;
        let mut hrow = vec![0.0; d];
        layer_norm_rows(&x[r * d..(r + 1) * d], t[base].data(), t[base + 1].data(), d, &mut hrow);
        out.push(hrow);
        states[*si].len += toks.len();
        row0 += toks.len();
    }
    out
}

impl LMParams {
    /// Greedy decoding of many prompts, each with its own optional hook.
    ///
    /// Stops a sequence at `<eos>` (not included in the output), after
    /// `max_new_tokens`, or at the context limit.
    pub fn generate_batch(&self, prompts: &[Vec<usize>], max_new_tokens: usize, hooks: &[Option<&dyn Hook>]) -> Result<Vec<Vec<usize>>> {
        let cfg = &self.config;
        if max_new_tokens == 0 {
            return Err(LmError::ZeroNewTokens);
        }
        if hooks.len() != prompts.len() {
            return Err(LmError::Config("one hook slot per prompt".into()));
        }
        for h in hooks.iter().flatten() {
            if h.layer() >= cfg.n_layers {
                return Err(LmError::Config(format!("hook layer {} out of range", h.layer())));
            }
        }
        for p in prompts {
            if p.is_empty() {
                return Err(LmError::Config("empty sequence".into()));
            }
            if p.len() > cfg.max_seq_len {
                return Err(LmError::SequenceTooLong {
                    len: p.len(),
                    max: cfg.max_seq_len,
                });
            }
            if let Some(&bad) = p.iter().find(|&&t| t >= cfg.vocab_size) {
                return Err(LmError::Config(format!("token {bad} outside the vocabulary")));
            }
        }
        let base = 2 + cfg.n_layers * PER_LAYER;
        let (w_head, b_head) = (self.tensors[base + 2].data(), self.tensors[base + 3].data());
        let vsz = cfg.vocab_size;
        let mut results = Vec::with_capacity(prompts.len());
        for (chunk, hchunk) in prompts.chunks(INFER_CHUNK).zip(hooks.chunks(INFER_CHUNK)) {
            let mut states: Vec<SeqState<'_>> = chunk
                .iter()
                .zip(hchunk)
                .map(|(p, h)| SeqState {
                    len: 0,
                    prompt_end: p.len() - 1,
                    hook: *h,
                    keys: vec![Vec::new(); cfg.n_layers],
                    values: vec![Vec::new(); cfg.n_layers],
                })
                .collect();
            let mut generated: Vec<Vec<usize>> = vec![Vec::new(); chunk.len()];
            let mut pending: Vec<(usize, Vec<usize>)> = chunk.iter().cloned().enumerate().collect();
            for _ in 0..max_new_tokens {
                if pending.is_empty() {
                    break;
                }
                let hidden = extend(self, &mut states, &pending);
                let mut logits = Vec::new();
                let hs: Vec<f64> = hidden.concat();
                affine(&hs, hidden.len(), cfg.d_model, w_head, b_head, &mut logits);
                let mut next_pending = Vec::with_capacity(pending.len());
                for (row, (si, _)) in pending.iter().enumerate() {
                    let next = argmax(&logits[row * vsz..(row + 1) * vsz]);
                    if next == EOS {
                        continue;
                    }
                    generated[*si].push(next);
                    if states[*si].len < cfg.max_seq_len {
                        next_pending.push((*si, vec![next]));
                    }
                }
                pending = next_pending;
            }
            results.extend(generated);
        }
        Ok(results)
    }
}

// Prompts per decoding batch.
const INFER_CHUNK: usize = 64;
