// SPDX-License-Identifier: MIT OR Apache-2.0

use super::*;
use crate::corpus::{gen_profiles, gen_questions, render_biography, VocabConfig};
use crate::numkern::Tensor;

fn tiny_config(vocab: usize) -> LMConfig {
    LMConfig {
        d_model: 16,
        n_layers: 2,
        n_heads: 2,
        d_ff: 32,
        max_seq_len: 32,
        vocab_size: vocab,
        warmup_steps: 10,
        max_steps: 20,
        batch_size: 4,
        ..LMConfig::default()
    }
}

fn toy_vocab() -> Vocab {
    Vocab::build(["When was Ann Lee Cox born? 3, May, 1970.", "Where was Bo Ray Kim born? Tulsa."])
}

#[test]
fn tokenizer_round_trip() {
    let ps = gen_profiles(200, &VocabConfig::default(), 1).unwrap();
    let mut texts = Vec::new();
    for p in &ps {
        for v in 0..5 {
            texts.push(render_biography(p, v).unwrap());
        }
    }
    for q in gen_questions(&ps) {
        texts.push(q.question);
        texts.push(q.answer);
    }
    let vocab = Vocab::build(texts.iter().map(String::as_str));
    for t in &texts {
        let ids = vocab.tokenize(t);
        assert!(ids.iter().all(|&i| i != UNK), "coverage: {t}");
        assert_eq!(vocab.detokenize(&ids), *t);
    }
    assert_eq!(vocab.tokenize("Zyzzyva"), vec![UNK]);
    assert_eq!(vocab.token(BOS), "<bos>");
    assert_eq!(
        vocab::split_words("What is Ann's major?"),
        vec!["What", "is", "Ann", "'s", "major", "?"]
    );
}

#[test]
fn vocab_serde_keeps_ids() {
    let v = toy_vocab();
    let s = serde_json::to_string(&v).unwrap();
    let back: Vocab = serde_json::from_str(&s).unwrap();
    assert_eq!(back, v);
    assert_eq!(back.id("Tulsa"), v.id("Tulsa"));
}

#[test]
fn config_validation_and_schedule() {
    let mut c = tiny_config(20);
    assert!(c.validate().is_ok());
    c.n_heads = 3;
    assert!(c.validate().is_err());
    let c = LMConfig {
        vocab_size: 20,
        warmup_steps: 10,
        max_steps: 110,
        ..LMConfig::default()
    };
    assert!((c.lr_at(9) - 1e-3).abs() < 1e-15);
    assert!((c.lr_at(10) - 1e-3).abs() < 1e-12);
    assert!((c.lr_at(110) - 1e-4).abs() < 1e-12);
    assert!(c.lr_at(60) < 1e-3 && c.lr_at(60) > 1e-4);
}

#[test]
fn targets_mask_the_prompt() {
    let s = LmSequence::prompted(&[BOS, 7, 8, SEP], &[9, EOS]);
    assert_eq!(s.targets(), vec![None, None, None, Some(9), Some(EOS), None]);
    let f = LmSequence::full(vec![BOS, 7, EOS]);
    assert_eq!(f.targets(), vec![Some(7), Some(EOS), None]);
}

#[test]
fn qa_loss_only_counts_answer_positions() {
    let v = toy_vocab();
    let p = LMParams::init(&tiny_config(v.len()), 3).unwrap();
    let prompt = qa_prompt(&v, "When was Ann Lee Cox born?");
    let answer = answer_tokens(&v, "3, May, 1970");
    let seq = LmSequence::prompted(&prompt, &answer);
    let loss = evaluate_loss(&p, std::slice::from_ref(&seq)).unwrap();
    // Oracle: mean CE at the answer positions only.
    let logits = p.logits(&seq.tokens).unwrap();
    let mut total = 0.0;
    let mut n = 0;
    for t in prompt.len() - 1..seq.tokens.len() - 1 {
        let row = logits.row(t);
        total += crate::numkern::log_sum_exp(row) - row[seq.tokens[t + 1]];
        n += 1;
    }
    assert!((loss - total / n as f64).abs() < 1e-12);
    // Changing question content that is never a label leaves the masked
    // label set empty before the separator.
    assert!(seq.targets()[..prompt.len() - 1].iter().all(Option::is_none));
}

#[test]
fn capture_is_causal_and_reproducible() {
    let v = toy_vocab();
    let p = LMParams::init(&tiny_config(v.len()), 5).unwrap();
    let prompt = qa_prompt(&v, "Where was Bo Ray Kim born?");
    let (_, a) = p.forward_with_capture(&prompt, &[0, 1]).unwrap();
    let mut longer = prompt.clone();
    longer.extend(answer_tokens(&v, "Tulsa"));
    let (_, b) = p.forward_with_capture(&longer, &[0, 1]).unwrap();
    assert_eq!(a, b);
    assert_eq!(a[&1].len(), 16);
    assert_ne!(a[&0], a[&1]);
    // Double computation gives identical vectors.
    let (_, c) = p.forward_with_capture(&prompt, &[0, 1]).unwrap();
    assert_eq!(a, c);
    assert!(matches!(p.forward_with_capture(&[BOS, 7], &[0]), Err(LmError::NoSeparator)));
    // Batch capture agrees with single capture.
    let batch = p
        .capture_batch(&[longer.clone(), prompt.clone()], &[prompt.len() - 1, prompt.len() - 1], &[1])
        .unwrap();
    assert_eq!(batch[0][0], a[&1]);
    assert_eq!(batch[1][0], a[&1]);
}

#[test]
fn mean_pooling_switch() {
    let v = toy_vocab();
    let mut cfg = tiny_config(v.len());
    cfg.pooling = Pooling::Mean;
    let p = LMParams::init(&cfg, 5).unwrap();
    let prompt = qa_prompt(&v, "Where was Bo Ray Kim born?");
    let caps = p.capture_batch(&[prompt.clone()], &[prompt.len() - 1], &[0]).unwrap();
    let mut final_cfg = p.clone();
    final_cfg.config.pooling = Pooling::FinalToken;
    let mut mean = vec![0.0; 16];
    for pos in 0..prompt.len() {
        let c = final_cfg.capture_batch(&[prompt.clone()], &[pos], &[0]).unwrap();
        for (m, x) in mean.iter_mut().zip(&c[0][0]) {
            *m += x / prompt.len() as f64;
        }
    }
    for (a, b) in caps[0][0].iter().zip(&mean) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn identity_and_zero_hooks_do_not_change_output() {
    let v = toy_vocab();
    let p = LMParams::init(&tiny_config(v.len()), 7).unwrap();
    let prompt = qa_prompt(&v, "When was Ann Lee Cox born?");
    let base = p.generate(&prompt, 5, None).unwrap();
    let id = FnHook {
        layer: 1,
        f: |_: usize, _: usize, _: &mut [f64]| {},
    };
    assert_eq!(p.generate(&prompt, 5, Some(&id)).unwrap(), base);
    let dir = vec![0.3; 16];
    let zero = FnHook {
        layer: 1,
        f: |pos: usize, end: usize, h: &mut [f64]| {
            if pos >= end {
                for (x, d) in h.iter_mut().zip(&dir) {
                    *x += 0.0 * d;
                }
            }
        },
    };
    assert_eq!(p.generate(&prompt, 5, Some(&zero)).unwrap(), base);
    assert!(matches!(p.generate(&prompt, 0, None), Err(LmError::ZeroNewTokens)));
    // A large edit does change the continuation.
    let big = FnHook {
        layer: 0,
        f: |pos: usize, end: usize, h: &mut [f64]| {
            if pos >= end {
                h[0] += 1e3;
                h[3] -= 1e3;
            }
        },
    };
    let _ = p.generate(&prompt, 5, Some(&big)).unwrap();
}

#[test]
fn batch_generation_matches_single() {
    let v = toy_vocab();
    let p = LMParams::init(&tiny_config(v.len()), 9).unwrap();
    let a = qa_prompt(&v, "When was Ann Lee Cox born?");
    let b = qa_prompt(&v, "Where was Bo Ray Kim born?");
    let batch = p.generate_batch(&[a.clone(), b.clone()], 4, &[None, None]).unwrap();
    assert_eq!(batch[0], p.generate(&a, 4, None).unwrap());
    assert_eq!(batch[1], p.generate(&b, 4, None).unwrap());
}

#[test]
fn overfits_ten_pairs() {
    let ps = gen_profiles(10, &VocabConfig::default(), 2).unwrap();
    let qs: Vec<_> = gen_questions(&ps)
        .into_iter()
        .filter(|q| q.template_id == 0 && q.relation_index == 0)
        .collect();
    let vocab = Vocab::build(qs.iter().flat_map(|q| [q.question.as_str(), q.answer.as_str()]));
    let seqs: Vec<LmSequence> = qs
        .iter()
        .map(|q| LmSequence::prompted(&qa_prompt(&vocab, &q.question), &answer_tokens(&vocab, &q.answer)))
        .collect();
    let cfg = LMConfig {
        d_model: 32,
        n_layers: 2,
        n_heads: 2,
        d_ff: 64,
        max_seq_len: 24,
        vocab_size: vocab.len(),
        warmup_steps: 20,
        max_steps: 500,
        batch_size: 10,
        peak_lr: 3e-3,
        floor_lr: 1e-4,
        weight_decay: 0.0,
        ..LMConfig::default()
    };
    let mut epochs = 0;
    let (p, stats) = train_lm(&cfg, &seqs, &[], 4, |_| {
        epochs += 1;
        Ok(())
    })
    .unwrap();
    assert_eq!(stats.len(), epochs);
    assert!(stats.last().unwrap().train_loss < stats[0].train_loss);
    let mut correct = 0;
    for q in &qs {
        if generate_text(&p, &vocab, &q.question, 8, None).unwrap() == q.answer {
            correct += 1;
        }
    }
    assert_eq!(correct, qs.len());
}

#[test]
fn training_is_deterministic_and_f32_exact() {
    let v = toy_vocab();
    let cfg = tiny_config(v.len());
    let seqs = vec![
        LmSequence::full(document_tokens(&v, "When was Ann Lee Cox born? 3, May, 1970.")),
        LmSequence::prompted(&qa_prompt(&v, "Where was Bo Ray Kim born?"), &answer_tokens(&v, "Tulsa")),
    ];
    let (a, _) = train_lm(&cfg, &seqs, &seqs, 1, |_| Ok(())).unwrap();
    let (b, _) = train_lm(&cfg, &seqs, &seqs, 1, |_| Ok(())).unwrap();
    assert_eq!(a, b);
    for t in &a.tensors {
        assert_eq!(t, &t.round_to_f32());
    }
}

#[test]
fn checkpoint_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let v = toy_vocab();
    let mut p = LMParams::init(&tiny_config(v.len()), 2).unwrap();
    p.round_to_f32();
    let path = dir.path().join("lm.bin");
    save_lm(&path, &p, &v).unwrap();
    let (q, w) = load_lm(&path).unwrap();
    assert_eq!(p, q);
    assert_eq!(v, w);
    let bytes = std::fs::read(&path).unwrap();
    assert_eq!(&bytes[..4], b"ALM1");
    std::fs::write(&path, b"XXXX0000").unwrap();
    assert!(matches!(load_lm(&path), Err(LmError::Format(_))));
}

#[test]
fn activation_store_round_trip_is_bit_exact() {
    let dir = tempfile::tempdir().unwrap();
    let h: Vec<f64> = (0..8).map(|i| (i as f32 * 0.37 - 1.0) as f64).collect();
    let store = ActivationStore {
        d_model: 8,
        n_layers: 3,
        records: vec![
            ActivationRecord {
                example_id: 42,
                layer: 2,
                relation_index: 5,
                h: h.clone(),
            },
            ActivationRecord {
                example_id: 7,
                layer: 0,
                relation_index: 1,
                h: h.iter().map(|x| -x).collect(),
            },
        ],
    };
    let path = dir.path().join("acts.bin");
    store.write(&path).unwrap();
    let back = ActivationStore::read(&path).unwrap();
    assert_eq!(back, store);
    let bytes = std::fs::read(&path).unwrap();
    assert_eq!(&bytes[..4], b"ASAE");
    assert_eq!(bytes.len(), 4 + 4 + 4 + 4 + 8 + 2 * (8 + 2 + 2 + 8 * 4));
    assert_eq!(back.layer(2).len(), 1);
}

#[test]
fn init_is_finite_and_shaped() {
    let cfg = tiny_config(20);
    let p = LMParams::init(&cfg, 0).unwrap();
    assert_eq!(p.tensors.len(), LMParams::names(&cfg).len());
    for (t, s) in p.tensors.iter().zip(LMParams::shapes(&cfg)) {
        assert_eq!(t.shape(), s.as_slice());
        assert!(t.is_finite());
    }
    let _ = Tensor::scalar(0.0);
}

/// Greedy decoding by full recomputation through the training graph.
fn graph_greedy(p: &LMParams, prompt: &[usize], max_new: usize, hook: Option<&dyn Hook>) -> Vec<usize> {
    use super::model::{forward, head, leaf_vars, pack, HookSlot};
    let mut seq = prompt.to_vec();
    let mut out = Vec::new();
    for _ in 0..max_new {
        let batch = pack(&[seq.as_slice()], p.config.max_seq_len).unwrap();
        let slots: Vec<HookSlot<'_>> = hook
            .map(|h| HookSlot {
                seq: 0,
                prompt_end: prompt.len() - 1,
                hook: h,
            })
            .into_iter()
            .collect();
        let mut g = crate::numkern::Graph::new();
        let vars = leaf_vars(&mut g, p);
        let fwd = forward(&mut g, &vars, &p.config, &batch, &slots).unwrap();
        let logits = head(&mut g, &vars, &p.config, fwd.hidden, Some(&[seq.len() - 1])).unwrap();
        let next = crate::numkern::argmax(g.value(logits).row(0));
        if next == EOS {
            break;
        }
        seq.push(next);
        out.push(next);
    }
    out
}

#[test]
fn cached_decoding_matches_graph_recompute() {
    let v = toy_vocab();
    for seed in 0..6 {
        let p = LMParams::init(&tiny_config(v.len()), seed).unwrap();
        let prompts = [
            qa_prompt(&v, "When was Ann Lee Cox born?"),
            qa_prompt(&v, "Where was Bo Ray Kim born?"),
            qa_prompt(&v, "Tulsa"),
        ];
        let dir: Vec<f64> = (0..16).map(|i| ((i * 7 + seed as usize) % 5) as f64 - 2.0).collect();
        let hook = FnHook {
            layer: 1,
            f: move |pos: usize, end: usize, h: &mut [f64]| {
                if pos >= end {
                    for (x, d) in h.iter_mut().zip(&dir) {
                        *x += 0.8 * d;
                    }
                }
            },
        };
        let hooks: Vec<Option<&dyn Hook>> = vec![None, Some(&hook), Some(&hook)];
        let got = p.generate_batch(&prompts, 10, &hooks).unwrap();
        for (i, pr) in prompts.iter().enumerate() {
            assert_eq!(got[i], graph_greedy(&p, pr, 10, hooks[i]), "seed {seed} prompt {i}");
        }
    }
}
