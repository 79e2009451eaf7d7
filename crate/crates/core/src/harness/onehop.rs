// SPDX-License-Identifier: MIT OR Apache-2.0

//! The 1-hop biography pipeline: data, LM, activations, per-layer SAEs,
//! metrics, swaps and ablations.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{cell, csv_line, HarnessError, Result, RunDir};
use crate::baselm::{
    answer_tokens, document_tokens, load_lm, qa_prompt, save_lm, train_lm, ActivationRecord, ActivationStore, Hook, LMConfig, LMParams,
    LmSequence, Vocab,
};
use crate::corpus::{
    gen_profiles, gen_questions, read_jsonl, render_biography, write_jsonl, PersonProfile, QAExample, RelationOntology, Split, ValueClass,
    VocabConfig,
};
use crate::metrics::{
    answer_accuracy, binding_accuracy, concept_slots, confusion_and_diagonal, fragmentation, recon_mse, AnswerScore, BindingReport,
    ConfusionMatrix, FragmentationProfile,
};
use crate::numkern::Tensor;
use crate::rng::stream_rng;
use crate::sae::{dead_fraction, independence_score, load_sae, save_sae, train_sae, Ablation, EpochTrace, SAEParams, SaeData};
use crate::steer::{one_hop_cases, run_swap_experiment, CategoryIndex, MatchRule, Steerer, SwapCase, SwapReport, SwapSweep};

// ---------------------------------------------------------------------------
// Data

#[derive(Debug, Clone, PartialEq)]
pub struct OneHopData {
    pub profiles: Vec<PersonProfile>,
    pub questions: Vec<QAExample>,
    pub vocab: Vocab,
    pub ontology: RelationOntology,
}

impl OneHopData {
    pub fn split(&self, split: Split) -> Vec<&QAExample> {
        self.questions.iter().filter(|q| q.split == split).collect()
    }

    fn is_date(&self, relation: usize) -> bool {
        self.ontology.class_of_index(relation).ok() == Some(ValueClass::Date)
    }
}

const PROFILES: &str = "data/profiles.jsonl";
const QUESTIONS: &str = "data/questions.jsonl";
const VOCAB: &str = "data/vocab.json";

/// Generate (or regenerate and verify) the 1-hop corpus.
pub fn datagen(run: &RunDir) -> Result<OneHopData> {
    let cfg = &run.config;
    let profiles = gen_profiles(cfg.one_hop.n_profiles, &VocabConfig::default(), run.seeds.corpus)?;
    let questions = gen_questions(&profiles);
    let mut texts = Vec::new();
    for p in &profiles {
        for v in 0..cfg.one_hop.bio_variants {
            texts.push(render_biography(p, v)?);
        }
    }
    for q in &questions {
        texts.push(q.question.clone());
        texts.push(q.answer.clone());
    }
    let vocab = Vocab::build(texts.iter().map(String::as_str));
    run.write_artifact_with(PROFILES, |p| Ok(write_jsonl(p, &profiles)?))?;
    run.write_artifact_with(QUESTIONS, |p| Ok(write_jsonl(p, &questions)?))?;
    run.write_artifact(VOCAB, (serde_json::to_string(&vocab)? + "\n").as_bytes())?;
    Ok(OneHopData {
        profiles,
        questions,
        vocab,
        ontology: RelationOntology::one_hop(),
    })
}

fn load_data(run: &RunDir) -> Result<OneHopData> {
    let profiles = read_jsonl(&run.require(PROFILES)?)?;
    let questions = read_jsonl(&run.require(QUESTIONS)?)?;
    let vocab = serde_json::from_str(&std::fs::read_to_string(run.require(VOCAB)?)?)?;
    Ok(OneHopData {
        profiles,
        questions,
        vocab,
        ontology: RelationOntology::one_hop(),
    })
}

/// Corpus from disk if present, else generated.
pub(crate) fn data(run: &RunDir) -> Result<OneHopData> {
    if run.exists(QUESTIONS) {
        load_data(run)
    } else {
        datagen(run)
    }
}

// ---------------------------------------------------------------------------
// LM

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LmReport {
    pub steps: usize,
    pub final_train_loss: f64,
    pub train: AnswerScore,
    pub unseen: AnswerScore,
    /// Unseen exact-match accuracy per relation.
    pub unseen_per_relation: Vec<f64>,
}

const LM: &str = "lm/lm.bin";

fn lm_config(base: &LMConfig, vocab: &Vocab) -> LMConfig {
    LMConfig {
        vocab_size: vocab.len(),
        ..base.clone()
    }
}

/// Train the 1-hop LM on biographies plus train-template QA, or load the
/// existing checkpoint.
pub fn train_lm_stage(run: &RunDir, data: &OneHopData) -> Result<LMParams> {
    if run.exists(LM) {
        let (p, _) = load_lm(&run.path(LM))?;
        return Ok(p);
    }
    let v = &data.vocab;
    let mut seqs = Vec::new();
    for p in &data.profiles {
        for b in 0..run.config.one_hop.bio_variants {
            seqs.push(LmSequence::full(document_tokens(v, &render_biography(p, b)?)));
        }
    }
    for q in data.split(Split::Train) {
        seqs.push(LmSequence::prompted(&qa_prompt(v, &q.question), &answer_tokens(v, &q.answer)));
    }
    let cfg = lm_config(&run.config.lm, v);
    let mut log = csv_line(["epoch", "step", "train_loss"].map(String::from));
    let (params, _) = train_lm(&cfg, &seqs, &[], run.seeds.lm, |e| {
        log.push_str(&csv_line([
            e.stats.epoch.to_string(),
            e.stats.step.to_string(),
            cell(e.stats.train_loss),
        ]));
        Ok(())
    })?;
    run.write_artifact_with(LM, |p| Ok(save_lm(p, &params, v)?))?;
    run.write_artifact("lm/train_log.csv", log.as_bytes())?;
    Ok(params)
}

/// Load the trained 1-hop LM; errors if `train-lm` has not run.
pub fn load_lm_stage(run: &RunDir) -> Result<LMParams> {
    Ok(load_lm(&run.require(LM)?)?.0)
}

fn generate_answers(lm: &LMParams, vocab: &Vocab, qs: &[&QAExample], max_new: usize) -> Result<Vec<String>> {
    let prompts: Vec<Vec<usize>> = qs.iter().map(|q| qa_prompt(vocab, &q.question)).collect();
    let hooks: Vec<Option<&dyn Hook>> = vec![None; prompts.len()];
    Ok(lm
        .generate_batch(&prompts, max_new, &hooks)?
        .iter()
        .map(|t| vocab.detokenize(t))
        .collect())
}

/// Exact-match QA accuracy of the LM on both template splits.
pub fn evaluate_lm(run: &RunDir, data: &OneHopData, lm: &LMParams) -> Result<LmReport> {
    let max_new = run.config.swap.max_new_tokens;
    let mut scores = Vec::new();
    let mut per_rel = vec![(0usize, 0usize); data.ontology.len()];
    for split in [Split::Train, Split::Unseen] {
        let qs = data.split(split);
        let outs = generate_answers(lm, &data.vocab, &qs, max_new)?;
        let items: Vec<(&str, &str, bool)> = qs
            .iter()
            .zip(&outs)
            .map(|(q, o)| (o.as_str(), q.answer.as_str(), data.is_date(q.relation_index)))
            .collect();
        if split == Split::Unseen {
            for (q, item) in qs.iter().zip(&items) {
                let s = answer_accuracy([*item]);
                per_rel[q.relation_index].0 += (s.accuracy == 1.0) as usize;
                per_rel[q.relation_index].1 += 1;
            }
        }
        scores.push(answer_accuracy(items));
    }
    let unseen = scores.pop().unwrap_or_else(|| answer_accuracy([]));
    let train = scores.pop().unwrap_or_else(|| answer_accuracy([]));
    let report = LmReport {
        steps: lm.config.max_steps,
        final_train_loss: final_loss(run)?,
        train,
        unseen,
        unseen_per_relation: per_rel
            .iter()
            .map(|&(h, n)| if n == 0 { 0.0 } else { h as f64 / n as f64 })
            .collect(),
    };
    run.write_output("metrics/lm.json", &(serde_json::to_string_pretty(&report)? + "\n"), "eval")?;
    Ok(report)
}

fn final_loss(run: &RunDir) -> Result<f64> {
    let Ok(text) = std::fs::read_to_string(run.path("lm/train_log.csv")) else {
        return Ok(f64::NAN);
    };
    Ok(text
        .lines()
        .last()
        .and_then(|l| l.rsplit(',').next())
        .and_then(|x| x.parse().ok())
        .unwrap_or(f64::NAN))
}

// ---------------------------------------------------------------------------
// Activations

const ACTS: &str = "acts/acts.bin";

fn act_layers(run: &RunDir) -> Vec<usize> {
    let mut ls = run.config.layers.clone();
    ls.push(run.config.sae_layer);
    ls.sort_unstable();
    ls.dedup();
    ls
}

/// Residuals at the final prompt token for every question and configured
/// layer, rounded to f32.
pub fn collect_acts(run: &RunDir, data: &OneHopData, lm: &LMParams) -> Result<ActivationStore> {
    if run.exists(ACTS) {
        return Ok(ActivationStore::read(&run.path(ACTS))?);
    }
    let layers = act_layers(run);
    let seqs: Vec<Vec<usize>> = data.questions.iter().map(|q| qa_prompt(&data.vocab, &q.question)).collect();
    let pos: Vec<usize> = seqs.iter().map(|s| s.len() - 1).collect();
    let caps = lm.capture_batch(&seqs, &pos, &layers)?;
    let mut records = Vec::with_capacity(seqs.len() * layers.len());
    for (q, per_layer) in data.questions.iter().zip(caps) {
        for (&l, h) in layers.iter().zip(per_layer) {
            records.push(ActivationRecord {
                example_id: q.id as u64,
                layer: l as u16,
                relation_index: q.relation_index as u16,
                h: h.iter().map(|&x| x as f32 as f64).collect(),
            });
        }
    }
    let store = ActivationStore {
        d_model: lm.config.d_model,
        n_layers: lm.config.n_layers,
        records,
    };
    run.write_artifact_with(ACTS, |p| Ok(store.write(p)?))?;
    Ok(store)
}

/// Rows of `layer` for the given examples, in order.
pub(crate) fn layer_rows(store: &ActivationStore, layer: usize, ids: &[usize]) -> Result<Vec<Vec<f64>>> {
    let by_id: BTreeMap<u64, &ActivationRecord> = store.layer(layer).into_iter().map(|r| (r.example_id, r)).collect();
    if by_id.is_empty() {
        return Err(HarnessError::MissingLayer(layer));
    }
    ids.iter()
        .map(|&i| {
            by_id
                .get(&(i as u64))
                .map(|r| r.h.clone())
                .ok_or_else(|| HarnessError::Validation(format!("no activation for example {i} at layer {layer}")))
        })
        .collect()
}

// ---------------------------------------------------------------------------
// SAEs

fn arm_tag(layer: usize, arm: &str) -> String {
    format!("L{layer}_{arm}")
}

pub(crate) fn trace_csv(trace: &[EpochTrace]) -> String {
    let mut s = csv_line(["stage", "epoch", "recon", "sparse", "align", "ortho", "value", "total", "binding"].map(String::from));
    for t in trace {
        s.push_str(&csv_line([
            t.stage.to_string(),
            t.epoch.to_string(),
            cell(t.terms.recon),
            cell(t.terms.sparse),
            cell(t.terms.align),
            cell(t.terms.ortho),
            cell(t.terms.value),
            cell(t.terms.total),
            t.binding_accuracy.map(cell).unwrap_or_default(),
        ]));
    }
    s
}

/// Train or load an SAE and save it under `rel`.
pub(crate) fn train_or_load(run: &RunDir, rel: &str, config: &crate::sae::SAEConfig, sae_data: &SaeData) -> Result<SAEParams> {
    if run.exists(rel) {
        return Ok(load_sae(&run.path(rel))?);
    }
    let (params, trace) = train_sae(config, sae_data)?;
    run.write_artifact_with(rel, |p| Ok(save_sae(p, &params)?))?;
    // The loss trace belongs to the checkpoint and is write-once with it.
    run.write_artifact(&rel.replace(".bin", "_trace.csv"), trace_csv(&trace).as_bytes())?;
    Ok(params)
}

fn train_ids(data: &OneHopData) -> Vec<usize> {
    data.split(Split::Train).iter().map(|q| q.id).collect()
}

fn sae_training_data(data: &OneHopData, store: &ActivationStore, layer: usize) -> Result<SaeData> {
    let train = data.split(Split::Train);
    let rows = layer_rows(store, layer, &train_ids(data))?;
    let rels = train.iter().map(|q| q.relation_index).collect();
    let toks = train.iter().map(|q| answer_tokens(&data.vocab, &q.answer)[0]).collect();
    Ok(SaeData::new(&rows, Some(rels), Some(toks))?)
}

/// Concept-slot SAE for one layer and objective arm.
pub fn train_layer_sae(run: &RunDir, data: &OneHopData, store: &ActivationStore, layer: usize, ablation: Ablation) -> Result<SAEParams> {
    let sae_data = sae_training_data(data, store, layer)?;
    let cfg = run
        .config
        .sae
        .to_config(store.d_model, data.ontology.len(), data.vocab.len(), run.seeds.sae, ablation);
    let rel = format!("sae/{}.bin", arm_tag(layer, ablation.arm_name()));
    train_or_load(run, &rel, &cfg, &sae_data)
}

// ---------------------------------------------------------------------------
// Metrics

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub layer: usize,
    pub arm: String,
    pub train_binding: BindingReport,
    pub unseen_binding: BindingReport,
    pub train_diag: f64,
    pub unseen_diag: f64,
    pub train_confusion: ConfusionMatrix,
    pub unseen_confusion: ConfusionMatrix,
    pub recon_mse: f64,
    pub independence: f64,
    pub dead_fraction: f64,
    pub fragmentation: FragmentationProfile,
}

fn codes_of(params: &SAEParams, rows: &[Vec<f64>]) -> Result<Tensor> {
    let h = Tensor::from_rows(rows).map_err(crate::sae::SaeError::from)?;
    Ok(params.encode_batch(&h)?)
}

pub(crate) fn relation_labels(ontology: &RelationOntology) -> Vec<String> {
    ontology.relations.clone()
}

/// Binding, confusion, reconstruction, independence and fragmentation of
/// one SAE on its layer's activations.
pub fn evaluate_layer(
    run: &RunDir,
    data: &OneHopData,
    store: &ActivationStore,
    layer: usize,
    params: &SAEParams,
    arm: &str,
) -> Result<MetricsReport> {
    let k = params.n_free();
    let n_rel = data.ontology.len();
    let top_k = run.config.metrics.top_k;
    let mut out = Vec::new();
    for split in [Split::Train, Split::Unseen] {
        let qs = data.split(split);
        let ids: Vec<usize> = qs.iter().map(|q| q.id).collect();
        let gold: Vec<usize> = qs.iter().map(|q| q.relation_index).collect();
        let rows = layer_rows(store, layer, &ids)?;
        let codes = codes_of(params, &rows)?;
        let slots = concept_slots(&codes, k);
        let binding = binding_accuracy(&slots, &gold, top_k);
        let (cm, diag) = confusion_and_diagonal(&slots, &gold, n_rel);
        out.push((rows, codes, gold, binding, cm, diag));
    }
    let (u_rows, _, _, u_bind, u_cm, u_diag) = out.pop().ok_or(HarnessError::MissingLayer(layer))?;
    drop(u_rows);
    let (t_rows, t_codes, t_gold, t_bind, t_cm, t_diag) = out.pop().ok_or(HarnessError::MissingLayer(layer))?;
    let h = Tensor::from_rows(&t_rows).map_err(crate::sae::SaeError::from)?;
    let report = MetricsReport {
        layer,
        arm: arm.to_string(),
        train_binding: t_bind,
        unseen_binding: u_bind,
        train_diag: t_diag,
        unseen_diag: u_diag,
        recon_mse: recon_mse(params, &h)?,
        independence: independence_score(&t_codes, k),
        dead_fraction: dead_fraction(&t_codes, k),
        fragmentation: fragmentation(&t_codes, &t_gold, n_rel, k, run.config.metrics.aligned_scope),
        train_confusion: t_cm,
        unseen_confusion: u_cm,
    };
    let tag = arm_tag(layer, arm);
    let labels = relation_labels(&data.ontology);
    run.write_output(
        &format!("metrics/{tag}.json"),
        &(serde_json::to_string_pretty(&report)? + "\n"),
        "eval",
    )?;
    run.write_output(
        &format!("metrics/{tag}_confusion_train.csv"),
        &report.train_confusion.to_csv(&labels),
        "eval",
    )?;
    run.write_output(
        &format!("metrics/{tag}_confusion_unseen.csv"),
        &report.unseen_confusion.to_csv(&labels),
        "eval",
    )?;
    Ok(report)
}

// ---------------------------------------------------------------------------
// Swaps

/// Swap cases on train-template questions of a seeded person subset.
pub(crate) fn swap_cases(run: &RunDir, data: &OneHopData) -> Vec<SwapCase> {
    let mut persons: Vec<usize> = data.profiles.iter().map(|p| p.id).collect();
    persons.shuffle(&mut stream_rng(run.seeds.swap, "harness/swap-subjects"));
    persons.truncate(run.config.swap.n_subjects);
    let qs: Vec<QAExample> = data
        .split(Split::Train)
        .into_iter()
        .filter(|q| persons.contains(&q.person_id))
        .cloned()
        .collect();
    one_hop_cases(&qs, &data.profiles, &data.ontology, &data.vocab).0
}

pub(crate) fn swap_cells_csv(report: &SwapReport) -> String {
    let mut s = csv_line(
        [
            "layer",
            "alpha",
            "trials",
            "successes",
            "same_class_failures",
            "diff_class_failures",
            "success_rate",
            "baseline_failed_trials",
        ]
        .map(String::from),
    );
    for c in &report.cells {
        s.push_str(&csv_line([
            c.layer.to_string(),
            cell(c.alpha),
            c.counts.trials.to_string(),
            c.counts.successes.to_string(),
            c.counts.same_class_failures.to_string(),
            c.counts.diff_class_failures.to_string(),
            cell(c.success_rate),
            c.baseline_failed.trials.to_string(),
        ]));
    }
    s
}

pub(crate) fn write_swap_report(run: &RunDir, dir: &str, tag: &str, report: &SwapReport, verb: &str) -> Result<()> {
    run.write_output(&format!("{dir}/{tag}_grid.csv"), &report.grid_csv(), verb)?;
    run.write_output(&format!("{dir}/{tag}_cells.csv"), &swap_cells_csv(report), verb)?;
    run.write_output(&format!("{dir}/{tag}_report.json"), &(serde_json::to_string(report)? + "\n"), verb)
}

/// Swap sweep over the given (layer, steerer) pairs on the configured
/// alphas.
pub fn swap_sweep(run: &RunDir, data: &OneHopData, lm: &LMParams, layers: Vec<(usize, Steerer<'_>)>) -> Result<SwapReport> {
    let categories = CategoryIndex::one_hop(&VocabConfig::default());
    let s = &run.config.swap;
    let sweep = SwapSweep {
        lm,
        vocab: &data.vocab,
        layers,
        alphas: s.alphas.clone(),
        pairing: s.pairing,
        positions: s.positions,
        match_rule: MatchRule::Answer,
        max_new_tokens: s.max_new_tokens,
        seed: run.seeds.swap,
        categories: &categories,
    };
    Ok(run_swap_experiment(&sweep, &swap_cases(run, data))?)
}

/// Additive-swap sweep of the joint SAE at one layer, written under
/// `swap/`.
pub fn run_swap(run: &RunDir, layer: usize) -> Result<SwapReport> {
    let (data, lm, store) = upstream(run)?;
    let p = train_layer_sae(run, &data, &store, layer, Ablation::None)?;
    let steerer = Steerer::Sae {
        params: &p,
        variant: run.config.swap.variant,
    };
    let report = swap_sweep(run, &data, &lm, vec![(layer, steerer)])?;
    write_swap_report(run, "swap", &arm_tag(layer, "joint"), &report, "swap")?;
    Ok(report)
}

// ---------------------------------------------------------------------------
// Layer sweep

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerSweep {
    pub metrics: Vec<MetricsReport>,
    pub swap: SwapReport,
}

impl LayerSweep {
    /// Interior layer with the highest peak swap success.
    pub fn best_interior_layer(&self, n_layers: usize) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for &l in &self.swap.layers {
            if l == 0 || l + 1 >= n_layers {
                continue;
            }
            if let Some((_, r)) = self.swap.peak(l) {
                if best.is_none_or(|(_, b)| r > b) {
                    best = Some((l, r));
                }
            }
        }
        best.map(|(l, _)| l)
    }
}

/// Everything upstream of the SAEs, created on demand.
pub(crate) fn upstream(run: &RunDir) -> Result<(OneHopData, LMParams, ActivationStore)> {
    let data = data(run)?;
    let lm = train_lm_stage(run, &data)?;
    let store = collect_acts(run, &data, &lm)?;
    Ok((data, lm, store))
}

/// One joint SAE per configured layer, metrics per layer and a single swap
/// grid (layers x alphas).
pub fn run_layer_sweep(run: &RunDir) -> Result<LayerSweep> {
    let (data, lm, store) = upstream(run)?;
    let mut saes = Vec::new();
    let mut metrics = Vec::new();
    for &l in &run.config.layers {
        let p = train_layer_sae(run, &data, &store, l, Ablation::None)?;
        metrics.push(evaluate_layer(run, &data, &store, l, &p, "joint")?);
        saes.push((l, p));
    }
    let variant = run.config.swap.variant;
    let steerers = saes.iter().map(|(l, p)| (*l, Steerer::Sae { params: p, variant })).collect();
    let swap = swap_sweep(run, &data, &lm, steerers)?;
    write_swap_report(run, "sweep", "layers", &swap, "eval")?;
    let mut s = csv_line(
        [
            "layer",
            "train_diag",
            "unseen_diag",
            "train_binding",
            "unseen_binding",
            "recon_mse",
            "peak_swap",
            "best_alpha",
        ]
        .map(String::from),
    );
    for m in &metrics {
        let (a, r) = swap.peak(m.layer).unwrap_or((f64::NAN, f64::NAN));
        s.push_str(&csv_line([
            m.layer.to_string(),
            cell(m.train_diag),
            cell(m.unseen_diag),
            cell(m.train_binding.accuracy),
            cell(m.unseen_binding.accuracy),
            cell(m.recon_mse),
            cell(r),
            cell(a),
        ]));
    }
    run.write_output("sweep/layers.csv", &s, "eval")?;
    Ok(LayerSweep { metrics, swap })
}

// ---------------------------------------------------------------------------
// Fragmentation contrast

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FragmentationContrast {
    pub layer: usize,
    pub aligned: FragmentationProfile,
    pub traditional: FragmentationProfile,
}

/// Fragmentation of the joint SAE against a stage-1-only SAE with the same
/// architecture and seed on the same activations.
pub fn traditional_contrast(run: &RunDir, layer: usize) -> Result<FragmentationContrast> {
    let (data, _lm, store) = upstream(run)?;
    let joint = train_layer_sae(run, &data, &store, layer, Ablation::None)?;
    let trad = traditional_sae(run, &data, &store, layer)?;
    let train = data.split(Split::Train);
    let gold: Vec<usize> = train.iter().map(|q| q.relation_index).collect();
    let rows = layer_rows(&store, layer, &train_ids(&data))?;
    let n_rel = data.ontology.len();
    let m = &run.config.metrics;
    let aligned = fragmentation(&codes_of(&joint, &rows)?, &gold, n_rel, joint.n_free(), m.aligned_scope);
    let traditional = fragmentation(&codes_of(&trad, &rows)?, &gold, n_rel, trad.n_free(), m.traditional_scope);
    let out = FragmentationContrast {
        layer,
        aligned,
        traditional,
    };
    run.write_output("report/fragmentation.csv", &fragmentation_csv(&out, &data.ontology), "eval")?;
    run.write_output("metrics/fragmentation.json", &(serde_json::to_string_pretty(&out)? + "\n"), "eval")?;
    Ok(out)
}

/// Stage-1-only SAE with the joint arm's architecture and seed.
pub fn traditional_sae(run: &RunDir, data: &OneHopData, store: &ActivationStore, layer: usize) -> Result<SAEParams> {
    let sae_data = sae_training_data(data, store, layer)?;
    let mut cfg = run
        .config
        .sae
        .to_config(store.d_model, data.ontology.len(), data.vocab.len(), run.seeds.sae, Ablation::None);
    cfg.stage2_epochs = 0;
    train_or_load(run, &format!("sae/{}.bin", arm_tag(layer, "traditional")), &cfg, &sae_data)
}

/// Normalised mass by rank (largest first) per concept, both arms.
const FRAG_RANKS: usize = 32;

fn fragmentation_csv(c: &FragmentationContrast, ontology: &RelationOntology) -> String {
    let mut s = csv_line(["arm", "concept", "rank", "mass"].map(String::from));
    for (arm, prof) in [("aligned", &c.aligned), ("traditional", &c.traditional)] {
        for con in &prof.concepts {
            let mut b = con.b.clone();
            b.sort_by(|x, y| y.total_cmp(x));
            let name = ontology.name(con.concept).unwrap_or("?");
            for (r, m) in b.iter().take(FRAG_RANKS).enumerate() {
                s.push_str(&csv_line([arm.to_string(), name.to_string(), (r + 1).to_string(), cell(*m)]));
            }
        }
    }
    s
}

// ---------------------------------------------------------------------------
// Ablations

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub arm: String,
    pub train_binding: f64,
    pub unseen_binding: f64,
    pub train_diag: f64,
    pub independence: f64,
    pub recon_mse: f64,
    pub best_alpha: f64,
    pub peak_swap: f64,
    /// Unseen binding times peak swap success.
    pub product: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationTable {
    pub layer: usize,
    pub rows: Vec<AblationRow>,
    /// Per-arm objective switches, for auditing that arms differ only there.
    pub weights: BTreeMap<String, crate::sae::LossWeights>,
}

impl AblationTable {
    pub fn row(&self, arm: &str) -> Option<&AblationRow> {
        self.rows.iter().find(|r| r.arm == arm)
    }
}

/// Every configured arm at the SAE layer, same data order, each reported
/// at its best alpha.
pub fn run_ablation_suite(run: &RunDir) -> Result<AblationTable> {
    let (data, lm, store) = upstream(run)?;
    let layer = run.config.sae_layer;
    let mut rows = Vec::new();
    let mut weights = BTreeMap::new();
    for &arm in &run.config.ablations {
        let name = arm.arm_name();
        let p = train_layer_sae(run, &data, &store, layer, arm)?;
        weights.insert(name.to_string(), p.config.stage2_weights());
        let m = evaluate_layer(run, &data, &store, layer, &p, name)?;
        let swap = swap_sweep(
            run,
            &data,
            &lm,
            vec![(
                layer,
                Steerer::Sae {
                    params: &p,
                    variant: run.config.swap.variant,
                },
            )],
        )?;
        write_swap_report(run, "ablate", name, &swap, "ablate")?;
        let (best_alpha, peak_swap) = swap.peak(layer).unwrap_or((f64::NAN, 0.0));
        rows.push(AblationRow {
            arm: name.to_string(),
            train_binding: m.train_binding.accuracy,
            unseen_binding: m.unseen_binding.accuracy,
            train_diag: m.train_diag,
            independence: m.independence,
            recon_mse: m.recon_mse,
            best_alpha,
            peak_swap,
            product: m.unseen_binding.accuracy * peak_swap,
        });
    }
    let table = AblationTable { layer, rows, weights };
    let mut s = csv_line(
        [
            "arm",
            "train_binding",
            "unseen_binding",
            "train_diag",
            "independence",
            "recon_mse",
            "best_alpha",
            "peak_swap",
            "product",
        ]
        .map(String::from),
    );
    for r in &table.rows {
        s.push_str(&csv_line([
            r.arm.clone(),
            cell(r.train_binding),
            cell(r.unseen_binding),
            cell(r.train_diag),
            cell(r.independence),
            cell(r.recon_mse),
            cell(r.best_alpha),
            cell(r.peak_swap),
            cell(r.product),
        ]));
    }
    run.write_output("ablate/table.csv", &s, "ablate")?;
    run.write_output("ablate/table.json", &(serde_json::to_string_pretty(&table)? + "\n"), "ablate")?;
    Ok(table)
}
