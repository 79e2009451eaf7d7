// SPDX-License-Identifier: MIT OR Apache-2.0

//! Synthetic corpora: biography profiles with templated questions, and
//! relation chains with paraphrased evidence.

mod bio;
pub mod lexicon;
mod phrases;
mod twohop;

pub use bio::{
    gen_profiles, gen_questions, render_biography, render_question, PersonProfile, VocabConfig, BIO_VARIANTS, QUESTION_TEMPLATES,
};
pub use phrases::{paraphrase_bank, question_noun, TWOHOP_RELATIONS};
pub use twohop::{gen_twohop, TwoHopConfig, TwoHopExample, TwoHopGraph};

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("requested {requested} unique names but the vocabulary only holds {capacity}")]
    NameCapacity { requested: usize, capacity: usize },
    #[error("could not draw a fresh name after {retries} retries")]
    NameCollision { retries: usize },
    #[error("biography variant {0} out of range (0..5)")]
    Variant(usize),
    #[error("relation index {index} out of range ({count} relations)")]
    Relation { index: usize, count: usize },
    #[error("template id {0} out of range (0..4)")]
    Template(usize),
    #[error("vocabulary list `{0}` is empty")]
    EmptyList(&'static str),
    #[error("{0}")]
    Config(String),
    #[error("unknown relation `{0}`")]
    UnknownRelation(String),
    #[error("requested {requested} distinct chains but only {available} are resolvable")]
    ChainCapacity { requested: usize, available: usize },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {source}")]
    Json { line: usize, source: serde_json::Error },
}

pub type Result<T> = std::result::Result<T, CorpusError>;

// ---------------------------------------------------------------------------
// Ontology

/// Which generating vocabulary a relation's values come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValueClass {
    Date,
    City,
    University,
    Major,
    Company,
    Entity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelationOntology {
    pub relations: Vec<String>,
    pub slot_of: BTreeMap<String, usize>,
    pub value_class_of: BTreeMap<String, ValueClass>,
}

pub const ONE_HOP_RELATIONS: [&str; 6] = ["birth_date", "birth_city", "university", "major", "employer", "work_city"];

impl RelationOntology {
    /// Slots follow list order.
    pub fn new(relations: &[(&str, ValueClass)]) -> Result<Self> {
        if relations.is_empty() {
            return Err(CorpusError::Config("ontology needs at least one relation".into()));
        }
        let mut slot_of = BTreeMap::new();
        let mut value_class_of = BTreeMap::new();
        for (i, (name, class)) in relations.iter().enumerate() {
            if slot_of.insert(name.to_string(), i).is_some() {
                return Err(CorpusError::Config(format!("duplicate relation `{name}`")));
            }
            value_class_of.insert(name.to_string(), *class);
        }
        Ok(RelationOntology {
            relations: relations.iter().map(|(n, _)| n.to_string()).collect(),
            slot_of,
            value_class_of,
        })
    }

    pub fn one_hop() -> Self {
        use ValueClass::*;
        let classes = [Date, City, University, Major, Company, City];
        let pairs: Vec<(&str, ValueClass)> = ONE_HOP_RELATIONS.iter().copied().zip(classes).collect();
        Self::new(&pairs).expect("static ontology")
    }

    pub fn two_hop(relations: &[String]) -> Result<Self> {
        let pairs: Vec<(&str, ValueClass)> = relations.iter().map(|r| (r.as_str(), ValueClass::Entity)).collect();
        Self::new(&pairs)
    }

    pub fn len(&self) -> usize {
        self.relations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.relations.is_empty()
    }

    pub fn slot(&self, relation: &str) -> Option<usize> {
        self.slot_of.get(relation).copied()
    }

    pub fn name(&self, index: usize) -> Result<&str> {
        self.relations.get(index).map(String::as_str).ok_or(CorpusError::Relation {
            index,
            count: self.relations.len(),
        })
    }

    pub fn class_of_index(&self, index: usize) -> Result<ValueClass> {
        let name = self.name(index)?;
        Ok(self.value_class_of[name])
    }
}

// ---------------------------------------------------------------------------
// Splits

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Unseen,
    Validation,
}

impl Split {
    pub fn for_template(template_id: usize) -> Split {
        if template_id < 2 {
            Split::Train
        } else {
            Split::Unseen
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QAExample {
    pub id: usize,
    pub question: String,
    pub person_id: usize,
    pub relation_index: usize,
    pub answer: String,
    pub template_id: usize,
    pub split: Split,
}

/// Partition by template id: 0 and 1 train, 2 and 3 unseen. Order is kept.
pub fn split_dataset(examples: &[QAExample]) -> (Vec<QAExample>, Vec<QAExample>) {
    examples.iter().cloned().partition(|e| e.template_id < 2)
}

// ---------------------------------------------------------------------------
// Line-delimited JSON

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for item in items {
        serde_json::to_writer(&mut w, item).map_err(|source| CorpusError::Json { line: 0, source })?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let r = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|source| CorpusError::Json { line: i + 1, source })?);
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Dates

pub(crate) fn days_in_month(year: u32, month: u32) -> u32 {
    match month {
        2 if (year % 4 == 0 && year % 100 != 0) || year % 400 == 0 => 29,
        2 => 28,
        4 | 6 | 9 | 11 => 30,
        _ => 31,
    }
}

/// Canonical stored form, e.g. `24, March, 1964`.
pub fn format_date(year: u32, month: u32, day: u32) -> String {
    format!("{day}, {}, {year}", lexicon::MONTHS[(month - 1) as usize])
}

#[cfg(test)]
mod tests;
