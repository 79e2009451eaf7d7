// SPDX-License-Identifier: MIT OR Apache-2.0

//! Evaluation metrics. Everything here is a pure function of its inputs.

use serde::{Deserialize, Serialize};

use crate::numkern::{argmax, Tensor};
use crate::sae::{SAEParams, SaeError};

/// Normalisation constant for concept-feature distributions.
pub const FRAG_EPS: f64 = 1e-10;

// ---------------------------------------------------------------------------
// Binding

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BindingReport {
    pub n: usize,
    pub accuracy: f64,
    pub top_k: usize,
    pub top_k_accuracy: f64,
    /// Mean gap between the largest and second-largest slot activation.
    pub margin: f64,
}

/// Indices of the `k` largest values, ties to the lower index.
fn top_k_indices(xs: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[b].total_cmp(&xs[a]).then(a.cmp(&b)));
    idx.truncate(k);
    idx
}

/// Binding over concept-slot vectors `slots[i]` (already sliced to the
/// `R` relation slots) with gold relations.
pub fn binding_accuracy(slots: &[Vec<f64>], gold: &[usize], top_k: usize) -> BindingReport {
    let n = slots.len().min(gold.len());
    if n == 0 {
        return BindingReport {
            n: 0,
            accuracy: 0.0,
            top_k,
            top_k_accuracy: 0.0,
            margin: 0.0,
        };
    }
    let mut hits = 0usize;
    let mut hits_k = 0usize;
    let mut margin = 0.0;
    for (s, &g) in slots.iter().zip(gold) {
        if argmax(s) == g {
            hits += 1;
        }
        let top = top_k_indices(s, top_k.max(2));
        if top.iter().take(top_k).any(|&j| j == g) {
            hits_k += 1;
        }
        margin += match top.as_slice() {
            [a, b, ..] => s[*a] - s[*b],
            [a] => s[*a],
            [] => 0.0,
        };
    }
    let nf = n as f64;
    BindingReport {
        n,
        accuracy: hits as f64 / nf,
        top_k,
        top_k_accuracy: hits_k as f64 / nf,
        margin: margin / nf,
    }
}

/// Relation-slot block of each row of a code matrix.
pub fn concept_slots(codes: &Tensor, n_free: usize) -> Vec<Vec<f64>> {
    (0..codes.rows()).map(|i| codes.row(i)[n_free..].to_vec()).collect()
}

// ---------------------------------------------------------------------------
// Confusion

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    /// Row `r` = gold relation, column `j` = argmax slot. Rows are
    /// normalised by gold counts; empty rows stay zero.
    pub c: Vec<Vec<f64>>,
    pub counts: Vec<usize>,
}

impl ConfusionMatrix {
    pub fn empty_rows(&self) -> Vec<usize> {
        (0..self.counts.len()).filter(|&r| self.counts[r] == 0).collect()
    }

    /// Grid as CSV with a header row of slot indices.
    pub fn to_csv(&self, labels: &[String]) -> String {
        let n = self.c.len();
        let label = |i: usize| labels.get(i).cloned().unwrap_or_else(|| i.to_string());
        let mut out = String::from("gold");
        for j in 0..n {
            out.push(',');
            out.push_str(&label(j));
        }
        out.push('\n');
        for (r, row) in self.c.iter().enumerate() {
            out.push_str(&label(r));
            for x in row {
                out.push_str(&format!(",{x:.6}"));
            }
            out.push('\n');
        }
        out
    }
}

/// Confusion matrix and mean diagonal over non-empty gold rows.
pub fn confusion_and_diagonal(slots: &[Vec<f64>], gold: &[usize], n_rel: usize) -> (ConfusionMatrix, f64) {
    let mut c = vec![vec![0.0; n_rel]; n_rel];
    let mut counts = vec![0usize; n_rel];
    for (s, &g) in slots.iter().zip(gold) {
        if g >= n_rel {
            continue;
        }
        let j = argmax(s);
        if j < n_rel {
            c[g][j] += 1.0;
        }
        counts[g] += 1;
    }
    for (row, &n) in c.iter_mut().zip(&counts) {
        if n > 0 {
            for x in row.iter_mut() {
                *x /= n as f64;
            }
        }
    }
    let live: Vec<usize> = (0..n_rel).filter(|&r| counts[r] > 0).collect();
    let diag = if live.is_empty() {
        0.0
    } else {
        live.iter().map(|&r| c[r][r]).sum::<f64>() / live.len() as f64
    };
    (ConfusionMatrix { c, counts }, diag)
}

// ---------------------------------------------------------------------------
// Answers

const MONTH_NAMES: [&str; 12] = [
    "january",
    "february",
    "march",
    "april",
    "may",
    "june",
    "july",
    "august",
    "september",
    "october",
    "november",
    "december",
];

/// Case-fold, trim, collapse whitespace.
pub fn normalize_answer(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

fn month_index(s: &str) -> Option<u32> {
    let s = s.to_lowercase();
    MONTH_NAMES.iter().position(|m| *m == s).map(|i| i as u32 + 1)
}

fn valid(y: i32, m: u32, d: u32) -> Option<(i32, u32, u32)> {
    let dim = match m {
        1 | 3 | 5 | 7 | 8 | 10 | 12 => 31,
        4 | 6 | 9 | 11 => 30,
        2 if (y % 4 == 0 && y % 100 != 0) || y % 400 == 0 => 29,
        2 => 28,
        _ => return None,
    };
    (d >= 1 && d <= dim).then_some((y, m, d))
}

/// `(year, month, day)` from "24, March, 1964", "March 24, 1964" or
/// "1964-03-24".
pub fn canonical_date(s: &str) -> Option<(i32, u32, u32)> {
    let s = s.trim().trim_end_matches('.');
    if let Some((y, rest)) = s.split_once('-') {
        let (m, d) = rest.split_once('-')?;
        if y.len() == 4 {
            return valid(y.parse().ok()?, m.parse().ok()?, d.parse().ok()?);
        }
        return None;
    }
    let parts: Vec<&str> = s.split(|c: char| c == ',' || c.is_whitespace()).filter(|p| !p.is_empty()).collect();
    if parts.len() != 3 {
        return None;
    }
    let year: i32 = parts[2].parse().ok()?;
    if let Some(m) = month_index(parts[1]) {
        return valid(year, m, parts[0].parse().ok()?);
    }
    let m = month_index(parts[0])?;
    valid(year, m, parts[1].parse().ok()?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AnswerMatch {
    Match,
    Mismatch,
    /// A date answer whose generated text could not be parsed.
    UnparseableDate,
}

/// Exact match after normalisation; dates compare as calendar triples.
pub fn answer_match(generated: &str, gold: &str, is_date: bool) -> AnswerMatch {
    if is_date {
        let g = canonical_date(gold);
        return match (canonical_date(generated), g) {
            (Some(a), Some(b)) if a == b => AnswerMatch::Match,
            (Some(_), _) => AnswerMatch::Mismatch,
            (None, _) => AnswerMatch::UnparseableDate,
        };
    }
    if normalize_answer(generated) == normalize_answer(gold) {
        AnswerMatch::Match
    } else {
        AnswerMatch::Mismatch
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnswerScore {
    pub n: usize,
    pub accuracy: f64,
    pub unparseable_dates: usize,
}

/// Accuracy over `(generated, gold, is_date)` triples.
pub fn answer_accuracy<'a>(items: impl IntoIterator<Item = (&'a str, &'a str, bool)>) -> AnswerScore {
    let (mut n, mut hits, mut bad) = (0usize, 0usize, 0usize);
    for (g, t, d) in items {
        n += 1;
        match answer_match(g, t, d) {
            AnswerMatch::Match => hits += 1,
            AnswerMatch::Mismatch => {}
            AnswerMatch::UnparseableDate => bad += 1,
        }
    }
    AnswerScore {
        n,
        accuracy: if n == 0 { 0.0 } else { hits as f64 / n as f64 },
        unparseable_dates: bad,
    }
}

// ---------------------------------------------------------------------------
// Fragmentation

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureScope {
    ConceptSlots,
    FreeSlots,
    FullCode,
}

impl FeatureScope {
    fn range(self, n_free: usize, code_dim: usize) -> std::ops::Range<usize> {
        match self {
            FeatureScope::ConceptSlots => n_free..code_dim,
            FeatureScope::FreeSlots => 0..n_free,
            FeatureScope::FullCode => 0..code_dim,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConceptFragmentation {
    pub concept: usize,
    pub n: usize,
    /// Mean activation per feature in scope.
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub eff_feat: f64,
    pub top1c: f64,
    /// `A_c` was all zero; reported as uniform over the scope.
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FragmentationProfile {
    pub scope: FeatureScope,
    pub n_features: usize,
    pub concepts: Vec<ConceptFragmentation>,
    pub mean_eff_feat: f64,
    pub mean_top1c: f64,
}

/// `exp(-Σ B log B)`, with `0 log 0 = 0`.
pub fn eff_feat(b: &[f64]) -> f64 {
    let h: f64 = b.iter().filter(|&&x| x > 0.0).map(|&x| -x * x.ln()).sum();
    h.exp()
}

/// `A_c / (Σ A_c + ε)`.
pub fn normalize_profile(a: &[f64], eps: f64) -> Vec<f64> {
    let s: f64 = a.iter().sum::<f64>() + eps;
    a.iter().map(|x| x / s).collect()
}

/// Per-concept fragmentation over `codes [N, K+R]`. Concepts with no
/// examples are omitted.
pub fn fragmentation(codes: &Tensor, concepts: &[usize], n_concepts: usize, n_free: usize, scope: FeatureScope) -> FragmentationProfile {
    let range = scope.range(n_free, codes.cols());
    let width = range.len();
    let mut sums = vec![vec![0.0; width]; n_concepts];
    let mut counts = vec![0usize; n_concepts];
    for (i, &c) in concepts.iter().enumerate().take(codes.rows()) {
        if c >= n_concepts {
            continue;
        }
        for (s, x) in sums[c].iter_mut().zip(&codes.row(i)[range.clone()]) {
            *s += x;
        }
        counts[c] += 1;
    }
    let mut out = Vec::new();
    for c in 0..n_concepts {
        if counts[c] == 0 {
            continue;
        }
        let a: Vec<f64> = sums[c].iter().map(|s| s / counts[c] as f64).collect();
        let degenerate = a.iter().all(|&x| x <= 0.0);
        let b = normalize_profile(&a, FRAG_EPS);
        let (ef, t1) = if degenerate {
            (width as f64, 1.0 / width.max(1) as f64)
        } else {
            (eff_feat(&b), b.iter().cloned().fold(0.0, f64::max))
        };
        out.push(ConceptFragmentation {
            concept: c,
            n: counts[c],
            a,
            b,
            eff_feat: ef,
            top1c: t1,
            degenerate,
        });
    }
    let m = out.len().max(1) as f64;
    FragmentationProfile {
        scope,
        n_features: width,
        mean_eff_feat: out.iter().map(|c| c.eff_feat).sum::<f64>() / m,
        mean_top1c: out.iter().map(|c| c.top1c).sum::<f64>() / m,
        concepts: out,
    }
}

// ---------------------------------------------------------------------------
// Reconstruction

/// `(1/(N d)) Σ_i ‖h_i − ĥ_i‖²`: the same per-dimension normalisation as
/// the training objective.
pub fn recon_mse(params: &SAEParams, h: &Tensor) -> Result<f64, SaeError> {
    if h.rows() == 0 {
        return Ok(0.0);
    }
    let z = params.encode_batch(h)?;
    let hh = params.decode_batch(&z)?;
    let s: f64 = h.data().iter().zip(hh.data()).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(s / h.len() as f64)
}
