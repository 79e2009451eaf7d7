// SPDX-License-Identifier: MIT OR Apache-2.0

//! The 2-hop chain pipeline: step-wise SAE supervision, swap curves against
//! a stage-1-only SAE and a probe, and the grokking tracker.

use std::collections::BTreeMap;
use std::fs;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::onehop::{train_or_load, write_swap_report};
use super::{cell, csv_line, HarnessError, Result, RunDir};
use crate::baselm::{answer_tokens, chain_prompt, load_lm, save_lm, train_lm, Hook, LMConfig, LMParams, LmError, LmSequence, Vocab};
use crate::corpus::{gen_twohop, read_jsonl, write_jsonl, RelationOntology, Split, TwoHopExample, TwoHopGraph, ValueClass};
use crate::metrics::{
    binding_accuracy, concept_slots, confusion_and_diagonal, fragmentation, BindingReport, ConfusionMatrix, FeatureScope,
};
use crate::numkern::Tensor;
use crate::rng::stream_rng;
use crate::sae::{train_sae, Ablation, SAEParams, SaeData, SaeError};
use crate::steer::{probe_train, run_swap_experiment, CategoryIndex, MatchRule, Steerer, SwapCase, SwapReport, SwapSweep, SwapTarget};

// ---------------------------------------------------------------------------
// Data

#[derive(Debug, Clone, PartialEq)]
pub struct TwoHopData {
    pub graph: TwoHopGraph,
    pub examples: Vec<TwoHopExample>,
    pub vocab: Vocab,
    pub ontology: RelationOntology,
}

impl TwoHopData {
    pub fn split(&self, split: Split) -> Vec<&TwoHopExample> {
        self.examples.iter().filter(|e| e.split == split).collect()
    }

    pub fn prompt(&self, e: &TwoHopExample) -> Vec<usize> {
        chain_prompt(&self.vocab, &e.evidence, &e.question)
    }

    pub fn entity_token(&self, entity: usize) -> usize {
        answer_tokens(&self.vocab, &self.graph.entities[entity])[0]
    }
}

const GRAPH: &str = "twohop/graph.json";
const EXAMPLES: &str = "twohop/examples.jsonl";
const VOCAB: &str = "twohop/vocab.json";
const LM: &str = "twohop/lm.bin";
const CKPT_DIR: &str = "twohop/ckpt";

/// Generate the 2-hop graph and examples, or load them if present.
pub fn twohop_data(run: &RunDir) -> Result<TwoHopData> {
    let cfg = &run.config.two_hop;
    let ontology = RelationOntology::two_hop(&cfg.relations)?;
    if run.exists(EXAMPLES) {
        return Ok(TwoHopData {
            graph: serde_json::from_str(&fs::read_to_string(run.require(GRAPH)?)?)?,
            examples: read_jsonl(&run.require(EXAMPLES)?)?,
            vocab: serde_json::from_str(&fs::read_to_string(run.require(VOCAB)?)?)?,
            ontology,
        });
    }
    let (graph, examples) = gen_twohop(cfg, run.seeds.twohop_corpus)?;
    let mut texts: Vec<String> = graph.entities.clone();
    for e in &examples {
        texts.extend(e.evidence.iter().cloned());
        texts.push(e.question.clone());
    }
    let vocab = Vocab::build(texts.iter().map(String::as_str));
    run.write_artifact(GRAPH, (serde_json::to_string(&graph)? + "\n").as_bytes())?;
    run.write_artifact_with(EXAMPLES, |p| Ok(write_jsonl(p, &examples)?))?;
    run.write_artifact(VOCAB, (serde_json::to_string(&vocab)? + "\n").as_bytes())?;
    Ok(TwoHopData {
        graph,
        examples,
        vocab,
        ontology,
    })
}

fn sequence(data: &TwoHopData, e: &TwoHopExample) -> LmSequence {
    LmSequence::prompted(&data.prompt(e), &answer_tokens(&data.vocab, &e.target(&data.graph)))
}

fn ckpt_name(epoch: usize) -> String {
    format!("{CKPT_DIR}/ep{epoch:05}.bin")
}

/// Train the 2-hop LM, saving a checkpoint every `grok.checkpoint_every`
/// epochs and after the last one. Loads the final model if present.
pub fn train_twohop_lm(run: &RunDir) -> Result<(TwoHopData, LMParams)> {
    let data = twohop_data(run)?;
    if run.exists(LM) {
        return Ok((data, load_lm(&run.path(LM))?.0));
    }
    let train: Vec<LmSequence> = data.split(Split::Train).iter().map(|e| sequence(&data, e)).collect();
    let val: Vec<LmSequence> = data.split(Split::Validation).iter().map(|e| sequence(&data, e)).collect();
    let cfg = LMConfig {
        vocab_size: data.vocab.len(),
        ..run.config.twohop_lm.clone()
    };
    let every = run.config.grok.checkpoint_every;
    let steps_per_epoch = train.len().div_ceil(cfg.batch_size);
    let last_epoch = cfg.max_steps.div_ceil(steps_per_epoch);
    let mut log = csv_line(["epoch", "step", "train_loss", "validation_loss"].map(String::from));
    let mut failure: Option<HarnessError> = None;
    let (params, _) = train_lm(&cfg, &train, &val, run.seeds.twohop_lm, |e| {
        let s = e.stats;
        log.push_str(&csv_line([
            (s.epoch + 1).to_string(),
            s.step.to_string(),
            cell(s.train_loss),
            s.validation_loss.map(cell).unwrap_or_default(),
        ]));
        let n = s.epoch + 1;
        if n % every == 0 || n == last_epoch || s.step >= cfg.max_steps {
            if let Err(err) = run.write_artifact_with(&ckpt_name(n), |p| Ok(save_lm(p, e.params, &data.vocab)?)) {
                failure = Some(err);
                return Err(LmError::Format("checkpoint write failed".into()));
            }
        }
        Ok(())
    })
    .map_err(|e| failure.take().unwrap_or(HarnessError::Lm(e)))?;
    run.write_artifact_with(LM, |p| Ok(save_lm(p, &params, &data.vocab)?))?;
    run.write_artifact("twohop/train_log.csv", log.as_bytes())?;
    Ok((data, params))
}

// ---------------------------------------------------------------------------
// Step-wise activations

/// Residuals at step 1 (final prompt token, label r1) and step 2 (the
/// gold e2 token, label r2), rounded to f32.
struct StepActs {
    step1: Vec<Vec<f64>>,
    step2: Vec<Vec<f64>>,
}

fn step_acts(data: &TwoHopData, lm: &LMParams, exs: &[&TwoHopExample], layer: usize) -> Result<StepActs> {
    let mut seqs = Vec::with_capacity(exs.len() * 2);
    let mut pos = Vec::with_capacity(exs.len() * 2);
    for e in exs {
        let p = data.prompt(e);
        pos.push(p.len() - 1);
        seqs.push(p.clone());
        let mut q = p;
        q.push(data.entity_token(e.e2));
        pos.push(q.len() - 1);
        seqs.push(q);
    }
    let caps = lm.capture_batch(&seqs, &pos, &[layer])?;
    let mut step1 = Vec::with_capacity(exs.len());
    let mut step2 = Vec::with_capacity(exs.len());
    for (i, mut c) in caps.into_iter().enumerate() {
        let h: Vec<f64> = c.remove(0).iter().map(|&x| x as f32 as f64).collect();
        if i % 2 == 0 {
            step1.push(h);
        } else {
            step2.push(h);
        }
    }
    Ok(StepActs { step1, step2 })
}

fn stepwise_sae_data(data: &TwoHopData, exs: &[&TwoHopExample], acts: &StepActs) -> Result<SaeData> {
    let mut rows = acts.step1.clone();
    rows.extend(acts.step2.iter().cloned());
    let mut rels: Vec<usize> = exs.iter().map(|e| e.r1_index).collect();
    rels.extend(exs.iter().map(|e| e.r2_index));
    let mut toks: Vec<usize> = exs.iter().map(|e| data.entity_token(e.e2)).collect();
    toks.extend(exs.iter().map(|e| data.entity_token(e.e3)));
    Ok(SaeData::new(&rows, Some(rels), Some(toks))?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepMetrics {
    pub binding: BindingReport,
    pub confusion: ConfusionMatrix,
    pub diag: f64,
}

fn step_metrics(params: &SAEParams, rows: &[Vec<f64>], gold: &[usize], n_rel: usize, top_k: usize) -> Result<StepMetrics> {
    let h = Tensor::from_rows(rows).map_err(SaeError::from)?;
    let slots = concept_slots(&params.encode_batch(&h)?, params.n_free());
    let (confusion, diag) = confusion_and_diagonal(&slots, gold, n_rel);
    Ok(StepMetrics {
        binding: binding_accuracy(&slots, gold, top_k),
        confusion,
        diag,
    })
}

// ---------------------------------------------------------------------------
// Evaluation

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoHopReport {
    pub layer: usize,
    /// Validation accuracy of the first generated entity (e2).
    pub hop1_accuracy: f64,
    /// Validation accuracy of both entities.
    pub hop2_accuracy: f64,
    pub step1: StepMetrics,
    pub step2: StepMetrics,
    pub train_step1_diag: f64,
    pub train_step2_diag: f64,
    pub sae_peak: (f64, f64),
    pub traditional_peak: (f64, f64),
    pub probe_peak: (f64, f64),
    pub probe_train_accuracy: f64,
    /// Unit standing in for each relation in the stage-1-only SAE.
    pub traditional_units: Vec<usize>,
}

/// Greedy outputs scored per hop.
fn hop_accuracy(data: &TwoHopData, lm: &LMParams, exs: &[&TwoHopExample]) -> Result<(f64, f64)> {
    if exs.is_empty() {
        return Ok((0.0, 0.0));
    }
    let prompts: Vec<Vec<usize>> = exs.iter().map(|e| data.prompt(e)).collect();
    let hooks: Vec<Option<&dyn Hook>> = vec![None; prompts.len()];
    let outs = lm.generate_batch(&prompts, 2, &hooks)?;
    let (mut h1, mut h2) = (0usize, 0usize);
    for (e, o) in exs.iter().zip(&outs) {
        if o.first() == Some(&data.entity_token(e.e2)) {
            h1 += 1;
            if o.get(1) == Some(&data.entity_token(e.e3)) {
                h2 += 1;
            }
        }
    }
    let n = exs.len() as f64;
    Ok((h1 as f64 / n, h2 as f64 / n))
}

/// Swap cases on sampled chain questions: steer toward each hop-1
/// distractor relation; success is the first generated entity matching
/// `edges[(e1, distractor)]`.
fn chain_cases(run: &RunDir, data: &TwoHopData) -> Vec<SwapCase> {
    let mut exs: Vec<&TwoHopExample> = data.split(Split::Train);
    exs.shuffle(&mut stream_rng(run.seeds.swap, "harness/swap-chains"));
    exs.truncate(run.config.swap.n_chains);
    exs.sort_by_key(|e| e.id);
    exs.iter()
        .map(|e| SwapCase {
            id: e.id,
            prompt: data.prompt(e),
            source: e.r1_index,
            source_gold: data.graph.entities[e.e2].clone(),
            source_class: ValueClass::Entity,
            targets: e
                .hop1_distractors
                .iter()
                .filter_map(|&d| {
                    data.graph.target(e.e1, d).map(|t| SwapTarget {
                        relation: d,
                        gold: data.graph.entities[t].clone(),
                        class: ValueClass::Entity,
                    })
                })
                .collect(),
        })
        .collect()
}

fn chain_sweep(run: &RunDir, data: &TwoHopData, lm: &LMParams, layer: usize, steerer: Steerer<'_>) -> Result<SwapReport> {
    let categories = CategoryIndex::entities(&data.graph.entities);
    let s = &run.config.swap;
    let sweep = SwapSweep {
        lm,
        vocab: &data.vocab,
        layers: vec![(layer, steerer)],
        alphas: s.alphas.clone(),
        pairing: s.pairing,
        positions: s.positions,
        match_rule: MatchRule::FirstWord,
        max_new_tokens: 2,
        seed: run.seeds.swap,
        categories: &categories,
    };
    Ok(run_swap_experiment(&sweep, &chain_cases(run, data))?)
}

/// Most selective unit per relation: largest mean activation on that
/// relation's examples minus the mean over all examples.
fn selective_units(params: &SAEParams, rows: &[Vec<f64>], gold: &[usize], n_rel: usize) -> Result<Vec<usize>> {
    let h = Tensor::from_rows(rows).map_err(SaeError::from)?;
    let codes = params.encode_batch(&h)?;
    let prof = fragmentation(&codes, gold, n_rel, params.n_free(), FeatureScope::FullCode);
    let width = prof.n_features;
    let mut overall = vec![0.0; width];
    for c in &prof.concepts {
        for (o, a) in overall.iter_mut().zip(&c.a) {
            *o += a / prof.concepts.len() as f64;
        }
    }
    let mut units = vec![0; n_rel];
    for c in &prof.concepts {
        let diff: Vec<f64> = c.a.iter().zip(&overall).map(|(a, o)| a - o).collect();
        units[c.concept] = crate::numkern::argmax(&diff);
    }
    Ok(units)
}

fn sae_config(run: &RunDir, data: &TwoHopData) -> crate::sae::SAEConfig {
    let mut cfg = run.config.sae.to_config(
        run.config.twohop_lm.d_model,
        data.ontology.len(),
        data.vocab.len(),
        run.seeds.sae,
        Ablation::None,
    );
    cfg.n_free = run.config.sae.twohop_n_free;
    cfg
}

fn peak(report: &SwapReport, layer: usize) -> (f64, f64) {
    report.peak(layer).unwrap_or((f64::NAN, 0.0))
}

/// Step-wise SAE, confusion per step, and swap curves for the post-trained
/// SAE, the stage-1-only SAE and the probe.
pub fn run_twohop_eval(run: &RunDir) -> Result<TwoHopReport> {
    let (data, lm) = train_twohop_lm(run)?;
    let layer = run.config.twohop_layer;
    let n_rel = data.ontology.len();
    let top_k = run.config.metrics.top_k;
    let train = data.split(Split::Train);
    let val = data.split(Split::Validation);
    let tr_acts = step_acts(&data, &lm, &train, layer)?;
    let va_acts = step_acts(&data, &lm, &val, layer)?;
    let sae_data = stepwise_sae_data(&data, &train, &tr_acts)?;
    let base = sae_config(run, &data);
    let sae = train_or_load(run, &format!("twohop/sae_L{layer}_joint.bin"), &base, &sae_data)?;
    let mut trad_cfg = base.clone();
    trad_cfg.stage2_epochs = 0;
    let trad = train_or_load(run, &format!("twohop/sae_L{layer}_traditional.bin"), &trad_cfg, &sae_data)?;

    let r1_tr: Vec<usize> = train.iter().map(|e| e.r1_index).collect();
    let r2_tr: Vec<usize> = train.iter().map(|e| e.r2_index).collect();
    let r1_va: Vec<usize> = val.iter().map(|e| e.r1_index).collect();
    let r2_va: Vec<usize> = val.iter().map(|e| e.r2_index).collect();
    let step1 = step_metrics(&sae, &va_acts.step1, &r1_va, n_rel, top_k)?;
    let step2 = step_metrics(&sae, &va_acts.step2, &r2_va, n_rel, top_k)?;
    let train_step1_diag = step_metrics(&sae, &tr_acts.step1, &r1_tr, n_rel, top_k)?.diag;
    let train_step2_diag = step_metrics(&sae, &tr_acts.step2, &r2_tr, n_rel, top_k)?.diag;

    let units = selective_units(&trad, &tr_acts.step1, &r1_tr, n_rel)?;
    let probe = probe_train(&tr_acts.step1, &r1_tr, n_rel, &run.config.probe)?;
    let variant = run.config.swap.variant;
    let sae_swap = chain_sweep(run, &data, &lm, layer, Steerer::Sae { params: &sae, variant })?;
    let trad_swap = chain_sweep(
        run,
        &data,
        &lm,
        layer,
        Steerer::SaeUnits {
            params: &trad,
            units: &units,
        },
    )?;
    let probe_swap = chain_sweep(run, &data, &lm, layer, Steerer::Probe(&probe))?;
    for (tag, r) in [("sae", &sae_swap), ("traditional", &trad_swap), ("probe", &probe_swap)] {
        write_swap_report(run, "twohop", tag, r, "twohop")?;
    }
    run.write_output(
        "twohop/swap_curves.csv",
        &swap_curves_csv(layer, &[("sae", &sae_swap), ("traditional", &trad_swap), ("probe", &probe_swap)]),
        "twohop",
    )?;

    let (hop1, hop2) = hop_accuracy(&data, &lm, &val)?;
    let labels = data.ontology.relations.clone();
    run.write_output("twohop/confusion_step1.csv", &step1.confusion.to_csv(&labels), "twohop")?;
    run.write_output("twohop/confusion_step2.csv", &step2.confusion.to_csv(&labels), "twohop")?;
    let report = TwoHopReport {
        layer,
        hop1_accuracy: hop1,
        hop2_accuracy: hop2,
        step1,
        step2,
        train_step1_diag,
        train_step2_diag,
        sae_peak: peak(&sae_swap, layer),
        traditional_peak: peak(&trad_swap, layer),
        probe_peak: peak(&probe_swap, layer),
        probe_train_accuracy: probe.train_accuracy,
        traditional_units: units,
    };
    run.write_output("twohop/report.json", &(serde_json::to_string_pretty(&report)? + "\n"), "twohop")?;
    Ok(report)
}

fn swap_curves_csv(layer: usize, arms: &[(&str, &SwapReport)]) -> String {
    let mut s = csv_line(["arm", "alpha", "success_rate"].map(String::from));
    for (arm, r) in arms {
        for &a in &r.alphas {
            let rate = r.cell(layer, a).map(|c| c.success_rate).unwrap_or(0.0);
            s.push_str(&csv_line([arm.to_string(), cell(a), cell(rate)]));
        }
    }
    s
}

// ---------------------------------------------------------------------------
// Grokking tracker

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrokPoint {
    pub epoch: usize,
    pub train_loss: f64,
    pub validation_loss: f64,
    pub val_acc_hop1: f64,
    pub val_acc_hop2: f64,
    pub bind_step1: f64,
    pub bind_step2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrokTrace {
    pub threshold: f64,
    pub points: Vec<GrokPoint>,
    /// First checkpoint epoch at or above the threshold, per curve.
    pub crossings: BTreeMap<String, Option<usize>>,
    /// Validation crossing minus binding crossing (both steps), in epochs.
    pub lag: Option<i64>,
    pub first_confusion: Option<ConfusionMatrix>,
    pub last_confusion: Option<ConfusionMatrix>,
}

/// Curves tracked for threshold crossings, with their column in
/// `grok/trace.csv`.
pub const GROK_CURVES: [&str; 4] = ["val_acc_hop1", "val_acc_hop2", "bind_step1", "bind_step2"];

/// First epoch whose value reaches `threshold`.
pub fn first_crossing(epochs: &[usize], values: &[f64], threshold: f64) -> Option<usize> {
    epochs.iter().zip(values).find(|(_, &v)| v >= threshold).map(|(&e, _)| e)
}

fn log_losses(run: &RunDir) -> BTreeMap<usize, (f64, f64)> {
    let mut out = BTreeMap::new();
    if let Ok(text) = fs::read_to_string(run.path("twohop/train_log.csv")) {
        for line in text.lines().skip(1) {
            let f: Vec<&str> = line.split(',').collect();
            if let [ep, _, tl, vl] = f[..] {
                if let Ok(ep) = ep.parse() {
                    out.insert(ep, (tl.parse().unwrap_or(f64::NAN), vl.parse().unwrap_or(f64::NAN)));
                }
            }
        }
    }
    out
}

/// At each saved checkpoint, score the LM per hop on validation chains and
/// train an SAE snapshot for per-step binding accuracy.
pub fn run_grok_tracker(run: &RunDir) -> Result<GrokTrace> {
    let (data, _final) = train_twohop_lm(run)?;
    let layer = run.config.twohop_layer;
    let n_rel = data.ontology.len();
    let g = &run.config.grok;
    let train = data.split(Split::Train);
    let val = data.split(Split::Validation);
    let mut epochs: Vec<usize> = fs::read_dir(run.require(CKPT_DIR)?)?
        .filter_map(|e| e.ok())
        .filter_map(|e| {
            let name = e.file_name().into_string().ok()?;
            name.strip_prefix("ep")?.strip_suffix(".bin")?.parse().ok()
        })
        .collect();
    epochs.sort_unstable();
    let losses = log_losses(run);
    let mut cfg = sae_config(run, &data);
    if !g.full_budget {
        cfg.stage2_epochs = g.snapshot_stage2_epochs;
    }
    let r1_va: Vec<usize> = val.iter().map(|e| e.r1_index).collect();
    let r2_va: Vec<usize> = val.iter().map(|e| e.r2_index).collect();
    let mut points = Vec::new();
    let mut confusions = Vec::new();
    for &ep in &epochs {
        let (lm, _) = load_lm(&run.path(&ckpt_name(ep)))?;
        let (h1, h2) = hop_accuracy(&data, &lm, &val)?;
        let tr = step_acts(&data, &lm, &train, layer)?;
        let va = step_acts(&data, &lm, &val, layer)?;
        let (sae, _) = train_sae(&cfg, &stepwise_sae_data(&data, &train, &tr)?)?;
        let s1 = step_metrics(&sae, &va.step1, &r1_va, n_rel, 1)?;
        let s2 = step_metrics(&sae, &va.step2, &r2_va, n_rel, 1)?;
        let (tl, vl) = losses.get(&ep).copied().unwrap_or((f64::NAN, f64::NAN));
        points.push(GrokPoint {
            epoch: ep,
            train_loss: tl,
            validation_loss: vl,
            val_acc_hop1: h1,
            val_acc_hop2: h2,
            bind_step1: s1.binding.accuracy,
            bind_step2: s2.binding.accuracy,
        });
        confusions.push(s1.confusion);
    }
    let trace = grok_trace(points, confusions, g.threshold);
    run.write_output("grok/trace.csv", &grok_csv(&trace), "grok")?;
    run.write_output("grok/trace.json", &(serde_json::to_string_pretty(&trace)? + "\n"), "grok")?;
    let labels = data.ontology.relations.clone();
    if let Some(c) = &trace.first_confusion {
        run.write_output("grok/confusion_first.csv", &c.to_csv(&labels), "grok")?;
    }
    if let Some(c) = &trace.last_confusion {
        run.write_output("grok/confusion_last.csv", &c.to_csv(&labels), "grok")?;
    }
    Ok(trace)
}

pub(crate) fn grok_trace(points: Vec<GrokPoint>, mut confusions: Vec<ConfusionMatrix>, threshold: f64) -> GrokTrace {
    let epochs: Vec<usize> = points.iter().map(|p| p.epoch).collect();
    let curve = |f: fn(&GrokPoint) -> f64| points.iter().map(f).collect::<Vec<f64>>();
    let columns: [Vec<f64>; 4] = [
        curve(|p| p.val_acc_hop1),
        curve(|p| p.val_acc_hop2),
        curve(|p| p.bind_step1),
        curve(|p| p.bind_step2),
    ];
    let mut crossings = BTreeMap::new();
    for (name, col) in GROK_CURVES.iter().zip(&columns) {
        crossings.insert(name.to_string(), first_crossing(&epochs, col, threshold));
    }
    let bind_both: Vec<f64> = columns[2].iter().zip(&columns[3]).map(|(a, b)| a.min(*b)).collect();
    let bind_cross = first_crossing(&epochs, &bind_both, threshold);
    crossings.insert("bind_both".into(), bind_cross);
    let lag = match (crossings["val_acc_hop2"], bind_cross) {
        (Some(v), Some(b)) => Some(v as i64 - b as i64),
        _ => None,
    };
    let last_confusion = confusions.pop();
    let first_confusion = if confusions.is_empty() {
        None
    } else {
        Some(confusions.swap_remove(0))
    };
    GrokTrace {
        threshold,
        points,
        crossings,
        lag,
        first_confusion,
        last_confusion,
    }
}

pub(crate) fn grok_csv(trace: &GrokTrace) -> String {
    let mut s = csv_line(
        [
            "epoch",
            "train_loss",
            "validation_loss",
            "val_acc_hop1",
            "val_acc_hop2",
            "bind_step1",
            "bind_step2",
        ]
        .map(String::from),
    );
    for p in &trace.points {
        s.push_str(&csv_line([
            p.epoch.to_string(),
            cell(p.train_loss),
            cell(p.validation_loss),
            cell(p.val_acc_hop1),
            cell(p.val_acc_hop2),
            cell(p.bind_step1),
            cell(p.bind_step2),
        ]));
    }
    s
}
