// SPDX-License-Identifier: MIT OR Apache-2.0

use proptest::prelude::*;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::*;
use crate::numkern::argmax;
use crate::numkern::gradcheck::{max_relative_error, numeric_grads};

fn matvec_oracle(w: &Tensor, x: &[f64], bias: &[f64]) -> Vec<f64> {
    // w is [in, out]
    let (n_in, n_out) = (w.rows(), w.cols());
    let mut out = bias.to_vec();
    for o in 0..n_out {
        for i in 0..n_in {
            out[o] += x[i] * w.data()[i * n_out + o];
        }
    }
    out
}

fn randn(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

fn small_config(d: usize, k: usize, r: usize, v: usize, seed: u64) -> SAEConfig {
    let mut c = SAEConfig::new(d, k, r, v);
    c.value_hidden = 4;
    c.seed = seed;
    c
}

/// Toy activations: relation `r` adds a fixed direction, plus noise and a
/// shared nuisance component. Answer token is a function of (r, noise bucket).
fn toy_data(n: usize, d: usize, n_rel: usize, vocab: usize, seed: u64) -> SaeData {
    let mut rng = crate::rng::stream_rng(seed, "test/toy");
    let dirs: Vec<Vec<f64>> = (0..n_rel).map(|_| randn(&mut rng, d)).collect();
    let mut rows = Vec::new();
    let mut rels = Vec::new();
    let mut toks = Vec::new();
    for i in 0..n {
        let r = i % n_rel;
        let a = rng.gen_range(0..2usize);
        let noise = randn(&mut rng, d);
        let row: Vec<f64> = (0..d)
            .map(|j| 2.0 * dirs[r][j] + 0.3 * noise[j] + if a == 1 { 0.5 } else { -0.5 } * dirs[(r + 1) % n_rel][j])
            .collect();
        rows.push(row);
        rels.push(r);
        toks.push((2 * r + a) % vocab);
    }
    SaeData::new(&rows, Some(rels), Some(toks)).unwrap()
}

// ---------------------------------------------------------------------------
// encode / decode

#[test]
fn encode_zero_input_zero_bias() {
    let p = SAEParams::init(&small_config(5, 3, 2, 4, 1)).unwrap();
    let z = p.encode(&[0.0; 5]).unwrap();
    assert!(z.z.iter().all(|&x| x == 0.0));
    assert_eq!(z.free().len(), 3);
    assert_eq!(z.concept().len(), 2);
}

#[test]
fn encode_identity_relu() {
    let mut p = SAEParams::init(&small_config(2, 1, 1, 3, 0)).unwrap();
    p.tensors[W_E] = Tensor::matrix(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
    let z = p.encode(&[0.5, -0.3]).unwrap();
    assert_eq!(z.z, vec![0.5, 0.0]);
}

#[test]
fn encode_decode_match_matvec_oracle() {
    let mut p = SAEParams::init(&small_config(7, 5, 3, 4, 9)).unwrap();
    let mut rng = crate::rng::stream_rng(3, "t");
    p.tensors[B_E] = Tensor::vector(randn(&mut rng, 8)).unwrap();
    p.tensors[B_D] = Tensor::vector(randn(&mut rng, 7)).unwrap();
    for _ in 0..5 {
        let h = randn(&mut rng, 7);
        let pre = matvec_oracle(p.w_e(), &h, p.b_e().data());
        let want: Vec<f64> = pre.iter().map(|x| x.max(0.0)).collect();
        let got = p.encode(&h).unwrap().z;
        for (a, b) in got.iter().zip(&want) {
            assert!((a - b).abs() < 1e-12);
        }
        let z = randn(&mut rng, 8);
        let want = matvec_oracle(p.w_d(), &z, p.b_d().data());
        let got = p.decode(&z).unwrap();
        for (a, b) in got.iter().zip(&want) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}

#[test]
fn decode_zero_is_bias_and_linear() {
    let mut p = SAEParams::init(&small_config(4, 3, 2, 4, 2)).unwrap();
    p.tensors[B_D] = Tensor::vector(vec![0.1, -0.2, 0.3, 0.4]).unwrap();
    assert_eq!(p.decode(&[0.0; 5]).unwrap(), p.b_d().data());
    let z = vec![0.3, 0.0, 1.2, 0.5, 0.1];
    let base = p.decode(&z).unwrap();
    let mut z2 = z.clone();
    z2[3] += 2.5;
    let moved = p.decode(&z2).unwrap();
    let dir = p.direction(3).unwrap();
    for j in 0..4 {
        assert!((moved[j] - base[j] - 2.5 * dir[j]).abs() < 1e-12);
    }
    assert!(p.direction(5).is_none());
}

#[test]
fn dimension_mismatch_errors() {
    let p = SAEParams::init(&small_config(4, 3, 2, 4, 2)).unwrap();
    assert!(matches!(p.encode(&[0.0; 3]), Err(SaeError::Dim { got: 3, expected: 4 })));
    assert!(matches!(p.decode(&[0.0; 4]), Err(SaeError::Dim { got: 4, expected: 5 })));
}

#[test]
fn codes_are_nonnegative_and_partitioned() {
    let p = SAEParams::init(&small_config(6, 4, 3, 4, 5)).unwrap();
    let mut rng = crate::rng::stream_rng(0, "t");
    for _ in 0..20 {
        let c = p.encode(&randn(&mut rng, 6)).unwrap();
        assert!(c.z.iter().all(|&x| x >= 0.0));
        assert_eq!(c.concept()[1], c.z[p.slot_index(1)]);
    }
}

// ---------------------------------------------------------------------------
// loss terms

fn all_weights() -> LossWeights {
    LossWeights {
        recon: 1.0,
        sparse: 1e-3,
        align: 1.0,
        ortho: 1e-2,
        value: 0.5,
    }
}

#[test]
fn perfect_reconstruction_gives_zero_total() {
    // d = 2, code = identity on the positive orthant.
    let mut p = SAEParams::init(&small_config(2, 1, 1, 2, 0)).unwrap();
    p.tensors[W_E] = Tensor::matrix(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
    p.tensors[W_D] = Tensor::matrix(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
    let h = Tensor::matrix(3, 2, vec![0.5, 0.2, 1.0, 0.0, 0.3, 0.9]).unwrap();
    let w = LossWeights {
        recon: 1.0,
        sparse: 0.0,
        align: 0.0,
        ortho: 0.0,
        value: 0.0,
    };
    let t = loss_terms(&p, &h, None, None, &w).unwrap();
    assert_eq!(t.recon, 0.0);
    assert_eq!(t.total, 0.0);
}

#[test]
fn uniform_slots_give_ln6_align() {
    let cfg = small_config(3, 2, 6, 4, 0);
    let mut p = SAEParams::init(&cfg).unwrap();
    // Slots read nothing from h and share one bias.
    let mut we = p.w_e().clone();
    for i in 0..3 {
        for j in 2..8 {
            we.data_mut()[i * 8 + j] = 0.0;
        }
    }
    p.tensors[W_E] = we;
    let mut be = vec![0.0; 8];
    for x in &mut be[2..] {
        *x = 0.7;
    }
    p.tensors[B_E] = Tensor::vector(be).unwrap();
    let h = Tensor::matrix(4, 3, vec![0.1, 0.2, 0.3, -0.5, 0.4, 0.0, 1.0, 1.0, -1.0, 0.0, 0.0, 2.0]).unwrap();
    let t = loss_terms(&p, &h, Some(&[0, 3, 5, 1]), None, &all_weights_no_value()).unwrap();
    assert!((t.align - 6f64.ln()).abs() < 1e-12, "{}", t.align);
    // Constant slots have zero covariance with anything.
    assert!(t.ortho.abs() < 1e-24);
}

fn all_weights_no_value() -> LossWeights {
    LossWeights {
        value: 0.0,
        ..all_weights()
    }
}

#[test]
fn all_zero_slots_are_uniform_without_special_case() {
    let cfg = small_config(3, 2, 6, 4, 0);
    let mut p = SAEParams::init(&cfg).unwrap();
    p.tensors[W_E] = Tensor::zeros(&[3, 8]);
    let h = Tensor::matrix(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
    let t = loss_terms(&p, &h, Some(&[2, 4]), None, &all_weights_no_value()).unwrap();
    assert!((t.align - 6f64.ln()).abs() < 1e-12);
}

#[test]
fn single_row_batch_has_zero_ortho() {
    let p = SAEParams::init(&small_config(4, 3, 2, 4, 2)).unwrap();
    let h = Tensor::matrix(1, 4, vec![0.3, -1.0, 2.0, 0.5]).unwrap();
    let t = loss_terms(&p, &h, Some(&[1]), Some(&[0]), &all_weights()).unwrap();
    assert_eq!(t.ortho, 0.0);
    assert!(t.total.is_finite());
}

#[test]
fn missing_labels_error() {
    let p = SAEParams::init(&small_config(4, 3, 2, 4, 2)).unwrap();
    let h = Tensor::matrix(2, 4, vec![0.0; 8]).unwrap();
    assert!(matches!(
        loss_terms(&p, &h, None, None, &all_weights()),
        Err(SaeError::MissingLabels(_))
    ));
    assert!(matches!(
        loss_terms(&p, &h, Some(&[0, 1]), None, &all_weights()),
        Err(SaeError::MissingLabels(_))
    ));
    let data = SaeData::new(&[vec![0.0; 4], vec![1.0; 4]], None, None).unwrap();
    let mut p2 = p.clone();
    assert!(matches!(train_stage2(&mut p2, &data), Err(SaeError::MissingLabels(_))));
}

/// Straightforward per-element oracle for every term.
fn terms_oracle(p: &SAEParams, h: &Tensor, rs: &[usize], ts: &[usize]) -> [f64; 5] {
    let cfg = &p.config;
    let (b, d, k, r_n) = (h.rows(), h.cols(), cfg.n_free, cfg.n_rel);
    let c = k + r_n;
    let zs: Vec<Vec<f64>> = (0..b)
        .map(|i| {
            matvec_oracle(p.w_e(), h.row(i), p.b_e().data())
                .into_iter()
                .map(|x| x.max(0.0))
                .collect()
        })
        .collect();
    let mut recon = 0.0;
    let mut sparse = 0.0;
    let mut align = 0.0;
    let mut value = 0.0;
    for i in 0..b {
        let hh = matvec_oracle(p.w_d(), &zs[i], p.b_d().data());
        for j in 0..d {
            recon += (hh[j] - h.row(i)[j]).powi(2);
        }
        sparse += zs[i][..k].iter().map(|x| x.abs()).sum::<f64>();
        let slots = &zs[i][k..c];
        let m = slots.iter().cloned().fold(f64::MIN, f64::max);
        let lse = m + slots.iter().map(|x| (x - m).exp()).sum::<f64>().ln();
        align += lse - slots[rs[i]];
        let logits = p.value_head_forward(rs[i], zs[i][k + rs[i]]).unwrap();
        let m = logits.iter().cloned().fold(f64::MIN, f64::max);
        let lse = m + logits.iter().map(|x| (x - m).exp()).sum::<f64>().ln();
        value += lse - logits[ts[i]];
    }
    let mut ortho = 0.0;
    if b >= 2 {
        let mean = |j: usize| zs.iter().map(|z| z[j]).sum::<f64>() / b as f64;
        for r in k..c {
            for j in 0..k {
                let (mr, mj) = (mean(r), mean(j));
                let cov: f64 = zs.iter().map(|z| (z[r] - mr) * (z[j] - mj)).sum::<f64>() / b as f64;
                ortho += cov * cov;
            }
        }
    }
    let bf = b as f64;
    [recon / (bf * d as f64), sparse / (bf * k as f64), align / bf, ortho, value / bf]
}

fn random_params(cfg: &SAEConfig, seed: u64) -> SAEParams {
    let mut p = SAEParams::init(cfg).unwrap();
    let mut rng = crate::rng::stream_rng(seed, "t/params");
    for t in &mut p.tensors {
        let n = t.len();
        *t = Tensor::new(t.shape().to_vec(), randn(&mut rng, n).into_iter().map(|x| 0.5 * x).collect()).unwrap();
    }
    p
}

#[test]
fn terms_match_elementwise_oracle() {
    for seed in 0..5 {
        let cfg = small_config(5, 4, 3, 6, seed);
        let p = random_params(&cfg, seed);
        let mut rng = crate::rng::stream_rng(seed, "t/h");
        let h = Tensor::matrix(6, 5, randn(&mut rng, 30)).unwrap();
        let rs = [0, 1, 2, 2, 1, 0];
        let ts = [5, 0, 3, 3, 1, 2];
        let t = loss_terms(&p, &h, Some(&rs), Some(&ts), &all_weights()).unwrap();
        let o = terms_oracle(&p, &h, &rs, &ts);
        let got = [t.recon, t.sparse, t.align, t.ortho, t.value];
        for (a, b) in got.iter().zip(&o) {
            assert!((a - b).abs() < 1e-10 * (1.0 + b.abs()), "{got:?} vs {o:?}");
        }
        let w = all_weights();
        let total = w.recon * o[0] + w.sparse * o[1] + w.align * o[2] + w.ortho * o[3] + w.value * o[4];
        assert!((t.total - total).abs() < 1e-10 * (1.0 + total));
    }
}

#[test]
fn value_loss_gradient_is_zero_on_non_gold_slots() {
    let cfg = small_config(5, 3, 4, 6, 1);
    let p = random_params(&cfg, 1);
    let mut rng = crate::rng::stream_rng(1, "t/h");
    let h = Tensor::matrix(5, 5, randn(&mut rng, 25)).unwrap();
    let rs = [0, 2, 2, 0, 3];
    let ts = [1, 2, 3, 4, 5];
    let w = LossWeights {
        recon: 0.0,
        sparse: 0.0,
        align: 0.0,
        ortho: 0.0,
        value: 1.0,
    };
    let mut lg = loss_graph(&p, &h, Some(&rs), Some(&ts), &w).unwrap();
    let z = lg.z;
    let total = lg.total;
    lg.graph.backward(total).unwrap();
    let gz = lg.graph.adjoint(z).unwrap();
    for i in 0..5 {
        for j in 0..7 {
            if j != 3 + rs[i] {
                assert_eq!(gz.row(i)[j], 0.0, "row {i} unit {j}");
            }
        }
    }
    // Relation 1 has no examples; its head receives no gradient.
    assert!(lg.leaves[N_CORE + 2 + 2].is_none());
}

#[test]
fn argmax_over_slots_is_scale_invariant() {
    let mut rng = crate::rng::stream_rng(4, "t");
    for _ in 0..50 {
        let s: Vec<f64> = randn(&mut rng, 6).into_iter().map(|x| x.max(0.0)).collect();
        let a: f64 = rng.gen_range(1e-3..1e3);
        let scaled: Vec<f64> = s.iter().map(|x| a * x).collect();
        assert_eq!(argmax(&s), argmax(&scaled));
    }
    assert_eq!(argmax(&[0.0; 6]), 0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn each_term_gradient_matches_finite_differences(
        seed in 0u64..10_000,
        term in 0usize..5,
        b in 2usize..6,
    ) {
        let cfg = small_config(3, 2, 3, 4, seed);
        let p = random_params(&cfg, seed);
        let mut rng = crate::rng::stream_rng(seed, "t/h");
        let h = Tensor::matrix(b, 3, randn(&mut rng, 3 * b)).unwrap();
        let rs: Vec<usize> = (0..b).map(|i| (i + seed as usize) % 3).collect();
        let ts: Vec<usize> = (0..b).map(|i| (i * 7 + seed as usize) % 4).collect();
        let mut w = [0.0; 5];
        w[term] = 1.0;
        let w = LossWeights { recon: w[0], sparse: w[1], align: w[2], ortho: w[3], value: w[4] };

        let mut lg = loss_graph(&p, &h, Some(&rs), Some(&ts), &w).unwrap();
        let total = lg.total;
        let grads = lg.graph.backward(total).unwrap();
        let analytic: Vec<Tensor> = p.tensors.iter().enumerate()
            .map(|(i, t)| match lg.leaves[i] {
                Some(v) => grads.get_or_zeros(v, t),
                None => Tensor::zeros(t.shape()),
            })
            .collect();
        let numeric = numeric_grads(&p.tensors, 1e-6, |ts_| {
            let q = SAEParams { config: cfg.clone(), tensors: ts_.to_vec() };
            loss_terms(&q, &h, Some(&rs), Some(&ts), &w).unwrap().total
        });
        // Finite differences straddling a ReLU kink are meaningless; skip
        // configurations with a pre-activation within the step.
        let pre_close = (0..b).any(|i| {
            matvec_oracle(p.w_e(), h.row(i), p.b_e().data()).iter().any(|x| x.abs() < 1e-4)
        });
        prop_assume!(!pre_close);
        let err = max_relative_error(&analytic, &numeric, 1e-6);
        prop_assert!(err < 1e-4, "term {} err {}", term, err);
    }

    #[test]
    fn terms_are_nonnegative(seed in 0u64..10_000, b in 1usize..8) {
        let cfg = small_config(4, 3, 3, 5, seed);
        let p = random_params(&cfg, seed);
        let mut rng = crate::rng::stream_rng(seed, "t/h");
        let h = Tensor::matrix(b, 4, randn(&mut rng, 4 * b)).unwrap();
        let rs: Vec<usize> = (0..b).map(|i| i % 3).collect();
        let ts: Vec<usize> = (0..b).map(|i| i % 5).collect();
        let t = loss_terms(&p, &h, Some(&rs), Some(&ts), &all_weights()).unwrap();
        for x in [t.recon, t.sparse, t.align, t.ortho, t.value, t.total] {
            prop_assert!(x >= 0.0 && x.is_finite());
        }
    }
}

// ---------------------------------------------------------------------------
// independence

#[test]
fn independence_identical_codes_zero() {
    let c = Tensor::matrix(3, 4, [0.5, 1.0, 0.0, 2.0].repeat(3)).unwrap();
    assert_eq!(independence_score(&c, 3), 0.0);
}

#[test]
fn independence_two_slot_example() {
    let c = Tensor::matrix(2, 2, vec![1.0, 1.0, -1.0, -1.0]).unwrap();
    assert!((independence_score(&c, 2) - 2.0).abs() < 1e-12);
}

#[test]
fn independence_matches_double_loop() {
    let mut rng = crate::rng::stream_rng(8, "t");
    let c = Tensor::matrix(3, 4, randn(&mut rng, 12)).unwrap();
    let k = 4;
    let mut want = 0.0;
    for i in 0..k {
        for j in 0..k {
            if i == j {
                continue;
            }
            let mi = (0..3).map(|b| c.row(b)[i]).sum::<f64>() / 3.0;
            let mj = (0..3).map(|b| c.row(b)[j]).sum::<f64>() / 3.0;
            let cov = (0..3).map(|b| (c.row(b)[i] - mi) * (c.row(b)[j] - mj)).sum::<f64>() / 3.0;
            want += cov * cov;
        }
    }
    assert!((independence_score(&c, k) - want).abs() < 1e-12);
    // Only the free block counts.
    let free2: Vec<f64> = (0..3).flat_map(|b| c.row(b)[..2].to_vec()).collect();
    let c2 = Tensor::matrix(3, 2, free2).unwrap();
    assert_eq!(independence_score(&c, 2), independence_score(&c2, 2));
    assert_eq!(independence_score(&Tensor::matrix(1, 4, vec![1.0; 4]).unwrap(), 4), 0.0);
}

#[test]
fn dead_fraction_counts_silent_free_units() {
    let c = Tensor::matrix(2, 4, vec![0.0, 1.0, 0.0, 3.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
    assert_eq!(dead_fraction(&c, 3), 2.0 / 3.0);
}

// ---------------------------------------------------------------------------
// training

#[test]
fn stage1_decreases_recon_and_leaves_heads() {
    let data = toy_data(128, 8, 3, 6, 0);
    let mut cfg = small_config(8, 12, 3, 6, 0);
    cfg.stage1_epochs = 10;
    cfg.batch_size = 16;
    let mut p = SAEParams::init(&cfg).unwrap();
    let before = p.clone();
    let trace = train_stage1(&mut p, &data).unwrap();
    assert_eq!(trace.len(), 10);
    for w in trace.windows(2) {
        assert!(
            w[1].terms.recon <= w[0].terms.recon + 1e-9,
            "{} -> {}",
            w[0].terms.recon,
            w[1].terms.recon
        );
    }
    assert!(trace.iter().all(|t| t.terms.align == 0.0 && t.terms.value == 0.0));
    for i in 0..N_CORE {
        assert_ne!(p.tensors[i], before.tensors[i]);
    }
    for i in N_CORE..p.tensors.len() {
        assert_eq!(p.tensors[i], before.tensors[i]);
    }
}

#[test]
fn stage1_overcomplete_reconstructs() {
    let data = toy_data(256, 6, 3, 6, 1);
    let mut cfg = small_config(6, 12, 3, 6, 1);
    cfg.stage1_epochs = 1500;
    cfg.batch_size = 32;
    cfg.lr = 3e-3;
    let mut p = SAEParams::init(&cfg).unwrap();
    let trace = train_stage1(&mut p, &data).unwrap();
    let last = trace.last().unwrap().terms.recon;
    assert!(last < 1e-3, "recon {last}");
}

fn toy_config(ablation: Ablation) -> SAEConfig {
    let mut cfg = SAEConfig::new(12, 16, 6, 12);
    cfg.value_hidden = 16;
    cfg.stage1_epochs = 20;
    cfg.stage2_epochs = 60;
    cfg.batch_size = 32;
    cfg.lr = 3e-3;
    cfg.ablation = ablation;
    cfg
}

#[test]
fn full_objective_binds_on_toy_data() {
    let data = toy_data(384, 12, 6, 12, 2);
    let cfg = toy_config(Ablation::None);
    let (p, trace) = train_sae(&cfg, &data).unwrap();
    assert_eq!(trace.iter().filter(|t| t.stage == 2).count(), cfg.stage2_epochs);
    assert_eq!(trace.iter().filter(|t| t.stage == 1).count(), cfg.stage1_epochs);
    let acc = trace.last().unwrap().binding_accuracy.unwrap();
    assert!(acc >= 0.95, "binding {acc}");
    // And on the final (f32-rounded) parameters.
    let z = p.encode_batch(&data.h).unwrap();
    let rels = data.relations.as_ref().unwrap();
    let hits = (0..data.len()).filter(|&i| argmax(&z.row(i)[16..]) == rels[i]).count();
    assert!(hits as f64 / data.len() as f64 >= 0.95);
}

#[test]
fn no_align_binding_near_chance() {
    let data = toy_data(384, 12, 6, 12, 2);
    let cfg = toy_config(Ablation::Align);
    let (_, trace) = train_sae(&cfg, &data).unwrap();
    let acc = trace.last().unwrap().binding_accuracy.unwrap();
    assert!(trace.iter().all(|t| t.stage == 1 || t.terms.align > 0.0));
    assert!(acc < 0.4, "binding {acc}");
}

#[test]
fn stage1_ablation_skips_pretraining() {
    let data = toy_data(64, 12, 6, 12, 3);
    let mut cfg = toy_config(Ablation::Stage1);
    cfg.stage2_epochs = 3;
    let (_, trace) = train_sae(&cfg, &data).unwrap();
    assert_eq!(trace.len(), 3);
    assert!(trace.iter().all(|t| t.stage == 2));
}

#[test]
fn ablation_arms_share_stage2_order() {
    // With every lambda but recon zeroed, the joint and no_ortho arms train
    // on the same data order and must produce identical parameters.
    let data = toy_data(96, 12, 6, 12, 4);
    let mut a = toy_config(Ablation::None);
    a.stage1_epochs = 2;
    a.stage2_epochs = 2;
    a.lambda_ortho = 0.0;
    let mut b = a.clone();
    b.ablation = Ablation::Ortho;
    let (pa, _) = train_sae(&a, &data).unwrap();
    let (pb, _) = train_sae(&b, &data).unwrap();
    assert_eq!(pa.tensors, pb.tensors);
}

#[test]
fn value_heads_output_vocab_logits() {
    let p = SAEParams::init(&small_config(4, 2, 3, 9, 0)).unwrap();
    let before = value_head_calls();
    assert_eq!(p.value_head_forward(2, 0.7).unwrap().len(), 9);
    assert!(p.value_head_forward(3, 0.7).is_err());
    assert!(value_head_calls() > before);
}

#[test]
fn checkpoint_round_trip() {
    let mut p = random_params(&small_config(4, 2, 3, 5, 7), 7);
    p.round_to_f32();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("sae.bin");
    save_sae(&path, &p).unwrap();
    let q = load_sae(&path).unwrap();
    assert_eq!(p, q);
    std::fs::write(&path, b"NOPE").unwrap();
    assert!(load_sae(&path).is_err());
}

#[test]
fn ablation_names_round_trip() {
    for a in Ablation::ALL {
        assert_eq!(Ablation::parse(a.arm_name()), Some(a));
    }
    assert_eq!(Ablation::parse("bogus"), None);
}
