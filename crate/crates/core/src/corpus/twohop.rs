// SPDX-License-Identifier: MIT OR Apache-2.0

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{lexicon, paraphrase_bank, question_noun, CorpusError, Result, Split};
use crate::rng::stream_rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoHopConfig {
    pub n_entities: usize,
    pub relations: Vec<String>,
    pub n_pairs: usize,
    pub paraphrases_per_hop: usize,
    /// Evidence sentences per hop that mention the same anchor entity under
    /// a different relation.
    pub distractors_per_hop: usize,
}

impl Default for TwoHopConfig {
    fn default() -> Self {
        TwoHopConfig {
            n_entities: 24,
            relations: [
                "friend_of",
                "reports_to",
                "mentor_of",
                "classmate_of",
                "neighbor_of",
                "cousin_of",
                "boss_of",
                "works_with",
            ]
            .iter()
            .map(|s| s.to_string())
            .collect(),
            n_pairs: 1200,
            paraphrases_per_hop: 1,
            distractors_per_hop: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoHopGraph {
    pub entities: Vec<String>,
    pub relations: Vec<String>,
    /// `edges[(x, r)] = y`: y is "the <noun r> of x".
    #[serde(with = "edge_list")]
    pub edges: BTreeMap<(usize, usize), usize>,
    pub paraphrase_bank: BTreeMap<String, Vec<String>>,
}

impl TwoHopGraph {
    pub fn target(&self, entity: usize, relation: usize) -> Option<usize> {
        self.edges.get(&(entity, relation)).copied()
    }

    /// Sentence stating `subject` holds `relation` toward `object`.
    pub fn sentence(&self, relation: usize, template: usize, subject: usize, object: usize) -> String {
        let t = &self.paraphrase_bank[&self.relations[relation]][template];
        t.replace("{A}", &self.entities[subject]).replace("{B}", &self.entities[object])
    }

    pub fn question(&self, e1: usize, r1: usize, r2: usize) -> String {
        let n1 = question_noun(&self.relations[r1]).expect("validated relation");
        let n2 = question_noun(&self.relations[r2]).expect("validated relation");
        format!("Who is the {n2} of the {n1} of {}?", self.entities[e1])
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TwoHopExample {
    pub id: usize,
    pub question: String,
    pub e1: usize,
    pub r1_index: usize,
    pub r2_index: usize,
    /// Gold hop-1 entity.
    pub e2: usize,
    /// Gold hop-2 entity.
    pub e3: usize,
    pub evidence: Vec<String>,
    /// Relations used by the distractor sentences about e1 and e2.
    pub hop1_distractors: Vec<usize>,
    pub hop2_distractors: Vec<usize>,
    pub split: Split,
}

impl TwoHopExample {
    /// Step-wise target text, e.g. `Dominic Gerald`.
    pub fn target(&self, graph: &TwoHopGraph) -> String {
        format!("{} {}", graph.entities[self.e2], graph.entities[self.e3])
    }
}

mod edge_list {
    use std::collections::BTreeMap;

    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    struct Edge {
        head: usize,
        relation: usize,
        tail: usize,
    }

    pub fn serialize<S: Serializer>(edges: &BTreeMap<(usize, usize), usize>, s: S) -> Result<S::Ok, S::Error> {
        let list: Vec<Edge> = edges
            .iter()
            .map(|(&(head, relation), &tail)| Edge { head, relation, tail })
            .collect();
        list.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BTreeMap<(usize, usize), usize>, D::Error> {
        let list = Vec::<Edge>::deserialize(d)?;
        Ok(list.into_iter().map(|e| ((e.head, e.relation), e.tail)).collect())
    }
}

const EDGE_RETRIES: usize = 64;

/// Build a functional relation graph and `n_pairs` distinct chain questions,
/// half train and half validation.
pub fn gen_twohop(config: &TwoHopConfig, seed: u64) -> Result<(TwoHopGraph, Vec<TwoHopExample>)> {
    let n = config.n_entities;
    if n < 3 {
        return Err(CorpusError::Config("need at least 3 entities".into()));
    }
    if n > lexicon::CHAIN_ENTITIES.len() {
        return Err(CorpusError::Config(format!(
            "at most {} entities are available",
            lexicon::CHAIN_ENTITIES.len()
        )));
    }
    if config.relations.is_empty() {
        return Err(CorpusError::Config("need at least one relation".into()));
    }
    if config.paraphrases_per_hop == 0 || config.paraphrases_per_hop > 6 {
        return Err(CorpusError::Config("paraphrases_per_hop must be in 1..=6".into()));
    }
    if config.distractors_per_hop >= config.relations.len() {
        return Err(CorpusError::Config("distractors_per_hop must be below the relation count".into()));
    }
    let full_bank = paraphrase_bank();
    let mut bank = BTreeMap::new();
    for r in &config.relations {
        let t = full_bank.get(r).ok_or_else(|| CorpusError::UnknownRelation(r.clone()))?;
        if bank.insert(r.clone(), t.clone()).is_some() {
            return Err(CorpusError::Config(format!("duplicate relation `{r}`")));
        }
    }
    let n_rel = config.relations.len();
    let mut rng = stream_rng(seed, "corpus/twohop");

    // Each edge target differs from its head; every (x, r) is defined, so
    // every chain resolves. Resample until each entity's relations point at
    // distinct targets where possible, so distractors carry distinct answers.
    let mut edges = BTreeMap::new();
    for x in 0..n {
        let mut used = Vec::with_capacity(n_rel);
        for r in 0..n_rel {
            let mut y = rng.gen_range(0..n);
            let mut tries = 0;
            while y == x || (used.contains(&y) && used.len() < n - 1 && tries < EDGE_RETRIES) {
                y = rng.gen_range(0..n);
                tries += 1;
            }
            used.push(y);
            edges.insert((x, r), y);
        }
    }
    let graph = TwoHopGraph {
        entities: lexicon::CHAIN_ENTITIES[..n].iter().map(|s| s.to_string()).collect(),
        relations: config.relations.clone(),
        edges,
        paraphrase_bank: bank,
    };

    let mut candidates = Vec::new();
    for e1 in 0..n {
        for r1 in 0..n_rel {
            for r2 in 0..n_rel {
                if r1 == r2 {
                    continue;
                }
                let e2 = graph.edges[&(e1, r1)];
                let e3 = graph.edges[&(e2, r2)];
                if e3 != e1 {
                    candidates.push((e1, r1, r2));
                }
            }
        }
    }
    if config.n_pairs > candidates.len() {
        return Err(CorpusError::ChainCapacity {
            requested: config.n_pairs,
            available: candidates.len(),
        });
    }
    candidates.shuffle(&mut rng);
    candidates.truncate(config.n_pairs);

    let n_train = config.n_pairs / 2;
    let mut examples = Vec::with_capacity(config.n_pairs);
    for (id, &(e1, r1, r2)) in candidates.iter().enumerate() {
        let e2 = graph.edges[&(e1, r1)];
        let e3 = graph.edges[&(e2, r2)];
        let mut evidence = Vec::new();
        push_paraphrases(&graph, &mut rng, r1, e2, e1, config.paraphrases_per_hop, &mut evidence);
        push_paraphrases(&graph, &mut rng, r2, e3, e2, config.paraphrases_per_hop, &mut evidence);
        let hop1_distractors = pick_distractors(&graph, &mut rng, e1, r1, config.distractors_per_hop);
        let hop2_distractors = pick_distractors(&graph, &mut rng, e2, r2, config.distractors_per_hop);
        for &d in &hop1_distractors {
            push_paraphrases(&graph, &mut rng, d, graph.edges[&(e1, d)], e1, 1, &mut evidence);
        }
        for &d in &hop2_distractors {
            push_paraphrases(&graph, &mut rng, d, graph.edges[&(e2, d)], e2, 1, &mut evidence);
        }
        evidence.shuffle(&mut rng);
        examples.push(TwoHopExample {
            id,
            question: graph.question(e1, r1, r2),
            e1,
            r1_index: r1,
            r2_index: r2,
            e2,
            e3,
            evidence,
            hop1_distractors,
            hop2_distractors,
            split: if id < n_train { Split::Train } else { Split::Validation },
        });
    }
    Ok((graph, examples))
}

fn push_paraphrases(
    graph: &TwoHopGraph,
    rng: &mut impl Rng,
    relation: usize,
    subject: usize,
    object: usize,
    count: usize,
    out: &mut Vec<String>,
) {
    let mut ids: Vec<usize> = (0..6).collect();
    ids.shuffle(rng);
    for &t in &ids[..count] {
        out.push(graph.sentence(relation, t, subject, object));
    }
}

/// Relations other than `gold` about `anchor`, preferring ones whose target
/// differs from the gold target.
fn pick_distractors(graph: &TwoHopGraph, rng: &mut impl Rng, anchor: usize, gold: usize, count: usize) -> Vec<usize> {
    let gold_target = graph.edges[&(anchor, gold)];
    let mut pool: Vec<usize> = (0..graph.relations.len()).filter(|&r| r != gold).collect();
    pool.shuffle(rng);
    pool.sort_by_key(|&r| graph.edges[&(anchor, r)] == gold_target);
    pool.truncate(count);
    pool
}
