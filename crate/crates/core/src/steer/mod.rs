// SPDX-License-Identifier: MIT OR Apache-2.0

//! Residual-stream interventions: slot swaps through the SAE decoder, the
//! linear-probe baseline, and the swap sweep with failure categories.

mod probe;

pub use probe::{probe_swap, probe_train, ProbeConfig, ProbeParams};

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::baselm::{Hook, LMParams, LmError, Vocab};
use crate::corpus::{PersonProfile, QAExample, RelationOntology, ValueClass, VocabConfig};
use crate::metrics::{answer_match, canonical_date, normalize_answer, AnswerMatch};
use crate::numkern::NumError;
use crate::rng::stream_rng;
use crate::sae::{SAEParams, SaeError};

#[derive(Debug, Error)]
pub enum SteerError {
    #[error("slot {slot} outside a code of width {dim}")]
    Slot { slot: usize, dim: usize },
    #[error("slot {0} is a free feature; pass allow_free_slot to steer it")]
    FreeSlot(usize),
    #[error("alpha must be finite and non-negative, got {0}")]
    Alpha(f64),
    #[error("probe: {0}")]
    Probe(String),
    #[error("swap sweep: {0}")]
    Config(String),
    #[error(transparent)]
    Lm(#[from] LmError),
    #[error(transparent)]
    Sae(#[from] SaeError),
    #[error(transparent)]
    Num(#[from] NumError),
}

pub type Result<T> = std::result::Result<T, SteerError>;

// ---------------------------------------------------------------------------
// Specs and hooks

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PositionPolicy {
    /// Final prompt token and every generated position.
    #[default]
    PromptEndAndGenerated,
    PromptEndOnly,
}

impl PositionPolicy {
    pub fn applies(self, position: usize, prompt_end: usize) -> bool {
        match self {
            PositionPolicy::PromptEndAndGenerated => position >= prompt_end,
            PositionPolicy::PromptEndOnly => position == prompt_end,
        }
    }
}

/// How an SAE swap edits the residual.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SwapVariant {
    /// `h + α v_j`.
    #[default]
    Additive,
    /// Re-decode after setting the source slot to 0 and the target slot
    /// to `α` in code space.
    ZeroAndSet,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InterventionSpec {
    pub layer: usize,
    /// Index into the full code.
    pub slot: usize,
    pub alpha: f64,
    #[serde(default)]
    pub positions: PositionPolicy,
    #[serde(default)]
    pub allow_free_slot: bool,
}

impl InterventionSpec {
    pub fn validate(&self, params: &SAEParams) -> Result<()> {
        if !(self.alpha.is_finite() && self.alpha >= 0.0) {
            return Err(SteerError::Alpha(self.alpha));
        }
        let dim = params.code_dim();
        if self.slot >= dim {
            return Err(SteerError::Slot { slot: self.slot, dim });
        }
        if self.slot < params.n_free() && !self.allow_free_slot {
            return Err(SteerError::FreeSlot(self.slot));
        }
        Ok(())
    }
}

/// `v_j`, row `j` of the decoder (the image of `e_j` minus the bias).
pub fn decoded_direction(params: &SAEParams, slot: usize) -> Result<Vec<f64>> {
    params.direction(slot).map(<[f64]>::to_vec).ok_or(SteerError::Slot {
        slot,
        dim: params.code_dim(),
    })
}

/// `h′ = h + α v_j` for one vector.
pub fn sae_swap(h: &[f64], spec: &InterventionSpec, params: &SAEParams) -> Result<Vec<f64>> {
    spec.validate(params)?;
    let v = decoded_direction(params, spec.slot)?;
    Ok(h.iter().zip(&v).map(|(x, d)| x + spec.alpha * d).collect())
}

/// Adds a fixed vector at the positions selected by the policy.
#[derive(Debug, Clone, PartialEq)]
pub struct AddHook {
    pub layer: usize,
    pub delta: Vec<f64>,
    pub positions: PositionPolicy,
}

impl Hook for AddHook {
    fn layer(&self) -> usize {
        self.layer
    }

    fn apply(&self, position: usize, prompt_end: usize, h: &mut [f64]) {
        if self.positions.applies(position, prompt_end) {
            for (x, d) in h.iter_mut().zip(&self.delta) {
                *x += d;
            }
        }
    }
}

/// Hook form of [`sae_swap`].
pub fn sae_swap_hook(spec: &InterventionSpec, params: &SAEParams) -> Result<AddHook> {
    spec.validate(params)?;
    let v = decoded_direction(params, spec.slot)?;
    Ok(AddHook {
        layer: spec.layer,
        delta: v.iter().map(|d| spec.alpha * d).collect(),
        positions: spec.positions,
    })
}

/// Code-space swap: `h + v_j (α − z_j) − v_i z_i` with `z` the code of the
/// current `h`.
pub struct ZeroAndSetHook<'a> {
    pub spec: InterventionSpec,
    pub source_slot: usize,
    pub params: &'a SAEParams,
}

impl ZeroAndSetHook<'_> {
    pub fn edit(&self, h: &mut [f64]) {
        let Ok(code) = self.params.encode(h) else {
            return;
        };
        let (i, j) = (self.source_slot, self.spec.slot);
        let (Some(vi), Some(vj)) = (self.params.direction(i), self.params.direction(j)) else {
            return;
        };
        let (zi, zj) = (code.z[i], code.z[j]);
        let cj = self.spec.alpha - zj;
        for k in 0..h.len() {
            h[k] += cj * vj[k];
            if i != j {
                h[k] -= zi * vi[k];
            }
        }
    }
}

impl Hook for ZeroAndSetHook<'_> {
    fn layer(&self) -> usize {
        self.spec.layer
    }

    fn apply(&self, position: usize, prompt_end: usize, h: &mut [f64]) {
        if self.spec.positions.applies(position, prompt_end) {
            self.edit(h);
        }
    }
}

// ---------------------------------------------------------------------------
// Categories

/// Answer-string to value-class lookup built from the generating
/// vocabularies. Dates are recognised by shape.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CategoryIndex {
    values: BTreeMap<String, ValueClass>,
}

impl CategoryIndex {
    pub fn one_hop(vocab: &VocabConfig) -> Self {
        let mut idx = CategoryIndex::default();
        for c in &vocab.cities {
            idx.insert(c, ValueClass::City);
        }
        for (company, hq) in &vocab.companies {
            idx.insert(company, ValueClass::Company);
            idx.insert(hq, ValueClass::City);
        }
        for u in &vocab.universities {
            idx.insert(u, ValueClass::University);
        }
        for m in &vocab.majors {
            idx.insert(m, ValueClass::Major);
        }
        idx
    }

    pub fn entities(names: &[String]) -> Self {
        let mut idx = CategoryIndex::default();
        for n in names {
            idx.insert(n, ValueClass::Entity);
        }
        idx
    }

    fn insert(&mut self, value: &str, class: ValueClass) {
        self.values.entry(normalize_answer(value)).or_insert(class);
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

pub fn category_of(answer: &str, index: &CategoryIndex) -> Option<ValueClass> {
    if canonical_date(answer).is_some() {
        return Some(ValueClass::Date);
    }
    index.values.get(&normalize_answer(answer)).copied()
}

// ---------------------------------------------------------------------------
// Swap sweep

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwapTarget {
    /// Relation index (= concept slot offset).
    pub relation: usize,
    pub gold: String,
    pub class: ValueClass,
}

/// One question with its source relation and candidate swap targets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwapCase {
    pub id: usize,
    pub prompt: Vec<usize>,
    pub source: usize,
    pub source_gold: String,
    pub source_class: ValueClass,
    pub targets: Vec<SwapTarget>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairingPolicy {
    #[default]
    All,
    Random,
}

/// How a steered generation is compared with the target's gold value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchRule {
    /// Whole answer, canonicalised.
    #[default]
    Answer,
    /// First whitespace-separated word of the output.
    FirstWord,
}

pub enum Steerer<'a> {
    Sae {
        params: &'a SAEParams,
        variant: SwapVariant,
    },
    /// Additive swap through an arbitrary unit per relation, for SAEs
    /// without bound slots: `units[r]` stands in for relation `r`.
    SaeUnits {
        params: &'a SAEParams,
        units: &'a [usize],
    },
    Probe(&'a ProbeParams),
}

impl Steerer<'_> {
    pub fn mode_name(&self) -> &'static str {
        match self {
            Steerer::Sae {
                variant: SwapVariant::Additive,
                ..
            } => "sae",
            Steerer::Sae {
                variant: SwapVariant::ZeroAndSet,
                ..
            } => "sae_zero_and_set",
            Steerer::SaeUnits { .. } => "sae_units",
            Steerer::Probe(_) => "probe",
        }
    }
}

pub struct SwapSweep<'a> {
    pub lm: &'a LMParams,
    pub vocab: &'a Vocab,
    /// One steerer per layer, trained on that layer's activations.
    pub layers: Vec<(usize, Steerer<'a>)>,
    pub alphas: Vec<f64>,
    pub pairing: PairingPolicy,
    pub positions: PositionPolicy,
    pub match_rule: MatchRule,
    pub max_new_tokens: usize,
    pub seed: u64,
    pub categories: &'a CategoryIndex,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SwapOutcome {
    Success,
    /// Failed, but the output is a value of the target's class.
    SameClass,
    DiffClass,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwapTrial {
    pub case_id: usize,
    pub layer: usize,
    pub alpha: f64,
    pub source: usize,
    pub target: usize,
    pub target_gold: String,
    pub baseline: String,
    pub baseline_correct: bool,
    pub steered: String,
    pub outcome: SwapOutcome,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct OutcomeCounts {
    pub trials: usize,
    pub successes: usize,
    pub same_class_failures: usize,
    pub diff_class_failures: usize,
}

impl OutcomeCounts {
    fn add(&mut self, o: SwapOutcome) {
        self.trials += 1;
        match o {
            SwapOutcome::Success => self.successes += 1,
            SwapOutcome::SameClass => self.same_class_failures += 1,
            SwapOutcome::DiffClass => self.diff_class_failures += 1,
        }
    }

    pub fn success_rate(&self) -> f64 {
        if self.trials == 0 {
            0.0
        } else {
            self.successes as f64 / self.trials as f64
        }
    }

    /// Share of failures that stayed in the target's class.
    pub fn category_retention(&self) -> Option<f64> {
        let f = self.same_class_failures + self.diff_class_failures;
        (f > 0).then(|| self.same_class_failures as f64 / f as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwapCell {
    pub layer: usize,
    pub alpha: f64,
    /// Trials whose unsteered answer to the original question was correct.
    pub counts: OutcomeCounts,
    pub success_rate: f64,
    /// Per target relation, over the same trials as `counts`.
    pub per_target: BTreeMap<usize, OutcomeCounts>,
    /// Trials whose baseline was already wrong, kept apart.
    pub baseline_failed: OutcomeCounts,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwapReport {
    pub mode: String,
    pub layers: Vec<usize>,
    pub alphas: Vec<f64>,
    pub cells: Vec<SwapCell>,
    pub trials: Vec<SwapTrial>,
}

impl SwapReport {
    pub fn cell(&self, layer: usize, alpha: f64) -> Option<&SwapCell> {
        self.cells.iter().find(|c| c.layer == layer && c.alpha == alpha)
    }

    /// Success rates, rows = layers, columns = alphas.
    pub fn grid(&self) -> Vec<Vec<f64>> {
        self.layers
            .iter()
            .map(|&l| {
                self.alphas
                    .iter()
                    .map(|&a| self.cell(l, a).map(|c| c.success_rate).unwrap_or(0.0))
                    .collect()
            })
            .collect()
    }

    /// Best `(alpha, rate)` for a layer; earliest alpha wins ties.
    pub fn peak(&self, layer: usize) -> Option<(f64, f64)> {
        let mut best: Option<(f64, f64)> = None;
        for &a in &self.alphas {
            let r = self.cell(layer, a)?.success_rate;
            if best.is_none_or(|(_, b)| r > b) {
                best = Some((a, r));
            }
        }
        best
    }

    /// `(layer, alpha, rate)` maximising the rate over all cells.
    pub fn overall_peak(&self) -> Option<(usize, f64, f64)> {
        let mut best: Option<(usize, f64, f64)> = None;
        for &l in &self.layers {
            if let Some((a, r)) = self.peak(l) {
                if best.is_none_or(|(_, _, b)| r > b) {
                    best = Some((l, a, r));
                }
            }
        }
        best
    }

    /// Grid as CSV: `layer,alpha_0,alpha_1,...`.
    pub fn grid_csv(&self) -> String {
        let mut out = String::from("layer");
        for a in &self.alphas {
            out.push_str(&format!(",{a}"));
        }
        out.push('\n');
        for (l, row) in self.layers.iter().zip(self.grid()) {
            out.push_str(&l.to_string());
            for r in row {
                out.push_str(&format!(",{r:.6}"));
            }
            out.push('\n');
        }
        out
    }
}

fn matches(rule: MatchRule, steered: &str, gold: &str, class: ValueClass) -> bool {
    match rule {
        MatchRule::Answer => answer_match(steered, gold, class == ValueClass::Date) == AnswerMatch::Match,
        MatchRule::FirstWord => {
            let first = steered.split_whitespace().next().unwrap_or("");
            normalize_answer(first) == normalize_answer(gold)
        }
    }
}

/// Targets per case under the pairing policy; fixed across layers and
/// alphas.
fn pair_targets(cases: &[SwapCase], pairing: PairingPolicy, seed: u64) -> Vec<Vec<usize>> {
    let mut rng = stream_rng(seed, "steer/pairs");
    cases
        .iter()
        .map(|c| {
            let valid: Vec<usize> = (0..c.targets.len()).filter(|&t| c.targets[t].relation != c.source).collect();
            match pairing {
                PairingPolicy::All => valid,
                PairingPolicy::Random if valid.is_empty() => valid,
                PairingPolicy::Random => vec![valid[rng.gen_range(0..valid.len())]],
            }
        })
        .collect()
}

/// Sweep every (layer, alpha) cell over every case and paired target.
pub fn run_swap_experiment(sweep: &SwapSweep<'_>, cases: &[SwapCase]) -> Result<SwapReport> {
    for &a in &sweep.alphas {
        if !(a.is_finite() && a >= 0.0) {
            return Err(SteerError::Alpha(a));
        }
    }
    if sweep.max_new_tokens == 0 {
        return Err(SteerError::Config("max_new_tokens must be positive".into()));
    }
    let vocab = sweep.vocab;
    let prompts: Vec<Vec<usize>> = cases.iter().map(|c| c.prompt.clone()).collect();
    let none: Vec<Option<&dyn Hook>> = vec![None; prompts.len()];
    let baseline: Vec<String> = sweep
        .lm
        .generate_batch(&prompts, sweep.max_new_tokens, &none)?
        .iter()
        .map(|t| vocab.detokenize(t))
        .collect();
    let baseline_ok: Vec<bool> = cases
        .iter()
        .zip(&baseline)
        .map(|(c, b)| matches(sweep.match_rule, b, &c.source_gold, c.source_class))
        .collect();
    let pairs = pair_targets(cases, sweep.pairing, sweep.seed);
    let flat: Vec<(usize, usize)> = pairs
        .iter()
        .enumerate()
        .flat_map(|(ci, ts)| ts.iter().map(move |&t| (ci, t)))
        .collect();

    let mut cells = Vec::new();
    let mut trials = Vec::new();
    for (layer, steerer) in &sweep.layers {
        let layer = *layer;
        if layer >= sweep.lm.config.n_layers {
            return Err(SteerError::Config(format!("layer {layer} out of range")));
        }
        if let Steerer::Sae { params, .. } | Steerer::SaeUnits { params, .. } = steerer {
            if params.config.d != sweep.lm.config.d_model {
                return Err(SteerError::Config("SAE width differs from the model width".into()));
            }
        }
        for &alpha in &sweep.alphas {
            let mut add_hooks: Vec<AddHook> = Vec::new();
            let mut zs_hooks: Vec<ZeroAndSetHook<'_>> = Vec::new();
            for &(ci, ti) in &flat {
                let c = &cases[ci];
                let t = &c.targets[ti];
                match steerer {
                    Steerer::Sae {
                        params,
                        variant: SwapVariant::Additive,
                    } => {
                        let spec = InterventionSpec {
                            layer,
                            slot: params.slot_index(t.relation),
                            alpha,
                            positions: sweep.positions,
                            allow_free_slot: false,
                        };
                        add_hooks.push(sae_swap_hook(&spec, params)?);
                    }
                    Steerer::Sae {
                        params,
                        variant: SwapVariant::ZeroAndSet,
                    } => {
                        let spec = InterventionSpec {
                            layer,
                            slot: params.slot_index(t.relation),
                            alpha,
                            positions: sweep.positions,
                            allow_free_slot: false,
                        };
                        spec.validate(params)?;
                        zs_hooks.push(ZeroAndSetHook {
                            spec,
                            source_slot: params.slot_index(c.source),
                            params,
                        });
                    }
                    Steerer::SaeUnits { params, units } => {
                        let slot = *units
                            .get(t.relation)
                            .ok_or_else(|| SteerError::Config(format!("no unit for relation {}", t.relation)))?;
                        let spec = InterventionSpec {
                            layer,
                            slot,
                            alpha,
                            positions: sweep.positions,
                            allow_free_slot: true,
                        };
                        add_hooks.push(sae_swap_hook(&spec, params)?);
                    }
                    Steerer::Probe(p) => {
                        let delta = probe::probe_delta(p, alpha, c.source, t.relation)?;
                        add_hooks.push(AddHook {
                            layer,
                            delta,
                            positions: sweep.positions,
                        });
                    }
                }
            }
            let hooks: Vec<Option<&dyn Hook>> = if zs_hooks.is_empty() {
                add_hooks.iter().map(|h| Some(h as &dyn Hook)).collect()
            } else {
                zs_hooks.iter().map(|h| Some(h as &dyn Hook)).collect()
            };
            let trial_prompts: Vec<Vec<usize>> = flat.iter().map(|&(ci, _)| cases[ci].prompt.clone()).collect();
            let outs = sweep.lm.generate_batch(&trial_prompts, sweep.max_new_tokens, &hooks)?;

            let mut counts = OutcomeCounts::default();
            let mut failed = OutcomeCounts::default();
            let mut per_target: BTreeMap<usize, OutcomeCounts> = BTreeMap::new();
            for (&(ci, ti), out) in flat.iter().zip(&outs) {
                let c = &cases[ci];
                let t = &c.targets[ti];
                let steered = vocab.detokenize(out);
                let outcome = if matches(sweep.match_rule, &steered, &t.gold, t.class) {
                    SwapOutcome::Success
                } else if category_of(&steered, sweep.categories) == Some(t.class) {
                    SwapOutcome::SameClass
                } else {
                    SwapOutcome::DiffClass
                };
                if baseline_ok[ci] {
                    counts.add(outcome);
                    per_target.entry(t.relation).or_default().add(outcome);
                } else {
                    failed.add(outcome);
                }
                trials.push(SwapTrial {
                    case_id: c.id,
                    layer,
                    alpha,
                    source: c.source,
                    target: t.relation,
                    target_gold: t.gold.clone(),
                    baseline: baseline[ci].clone(),
                    baseline_correct: baseline_ok[ci],
                    steered,
                    outcome,
                });
            }
            cells.push(SwapCell {
                layer,
                alpha,
                success_rate: counts.success_rate(),
                counts,
                per_target,
                baseline_failed: failed,
            });
        }
    }
    let mode = sweep.layers.first().map(|(_, s)| s.mode_name()).unwrap_or("sae").to_string();
    Ok(SwapReport {
        mode,
        layers: sweep.layers.iter().map(|(l, _)| *l).collect(),
        alphas: sweep.alphas.clone(),
        cells,
        trials,
    })
}

/// Swap cases for 1-hop questions: every other relation of the same
/// person is a candidate target. Returns the cases and the number of
/// (case, target) pairs skipped for a missing gold value.
pub fn one_hop_cases(
    questions: &[QAExample],
    profiles: &[PersonProfile],
    ontology: &RelationOntology,
    vocab: &Vocab,
) -> (Vec<SwapCase>, usize) {
    let mut skipped = 0;
    let mut out = Vec::with_capacity(questions.len());
    for q in questions {
        let Some(p) = profiles.iter().find(|p| p.id == q.person_id) else {
            skipped += ontology.len().saturating_sub(1);
            continue;
        };
        let Ok(source_class) = ontology.class_of_index(q.relation_index) else {
            continue;
        };
        let mut targets = Vec::new();
        for r in 0..ontology.len() {
            if r == q.relation_index {
                continue;
            }
            match (p.fact(r), ontology.class_of_index(r)) {
                (Ok(v), Ok(class)) => targets.push(SwapTarget {
                    relation: r,
                    gold: v.to_string(),
                    class,
                }),
                _ => skipped += 1,
            }
        }
        out.push(SwapCase {
            id: q.id,
            prompt: crate::baselm::qa_prompt(vocab, &q.question),
            source: q.relation_index,
            source_gold: q.answer.clone(),
            source_class,
            targets,
        });
    }
    (out, skipped)
}
