// SPDX-License-Identifier: MIT OR Apache-2.0

use std::collections::{BTreeMap, HashSet};

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{days_in_month, format_date, lexicon, CorpusError, QAExample, Result, Split, ONE_HOP_RELATIONS};
use crate::rng::stream_rng;

/// Name and value lists used to sample profiles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VocabConfig {
    pub first_names: Vec<String>,
    pub middle_names: Vec<String>,
    pub last_names: Vec<String>,
    pub cities: Vec<String>,
    pub universities: Vec<String>,
    pub majors: Vec<String>,
    /// (company, headquarters city)
    pub companies: Vec<(String, String)>,
    pub year_min: u32,
    pub year_max: u32,
}

fn owned(xs: &[&str]) -> Vec<String> {
    xs.iter().map(|s| s.to_string()).collect()
}

impl Default for VocabConfig {
    fn default() -> Self {
        VocabConfig {
            first_names: owned(lexicon::FIRST_NAMES),
            middle_names: owned(lexicon::MIDDLE_NAMES),
            last_names: owned(lexicon::LAST_NAMES),
            cities: owned(lexicon::CITIES),
            universities: owned(lexicon::UNIVERSITIES),
            majors: owned(lexicon::MAJORS),
            companies: lexicon::COMPANIES.iter().map(|(c, h)| (c.to_string(), h.to_string())).collect(),
            year_min: 1950,
            year_max: 1999,
        }
    }
}

impl VocabConfig {
    fn check(&self) -> Result<()> {
        let lists: [(&'static str, usize); 7] = [
            ("first_names", self.first_names.len()),
            ("middle_names", self.middle_names.len()),
            ("last_names", self.last_names.len()),
            ("cities", self.cities.len()),
            ("universities", self.universities.len()),
            ("majors", self.majors.len()),
            ("companies", self.companies.len()),
        ];
        for (name, len) in lists {
            if len == 0 {
                return Err(CorpusError::EmptyList(name));
            }
        }
        if self.year_min > self.year_max {
            return Err(CorpusError::Config("year_min exceeds year_max".into()));
        }
        Ok(())
    }

    pub fn name_capacity(&self) -> usize {
        self.first_names.len() * self.middle_names.len() * self.last_names.len()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PersonProfile {
    pub id: usize,
    pub full_name: String,
    pub first_name: String,
    pub facts: BTreeMap<String, String>,
}

impl PersonProfile {
    pub fn fact(&self, relation_index: usize) -> Result<&str> {
        let rel = ONE_HOP_RELATIONS.get(relation_index).ok_or(CorpusError::Relation {
            index: relation_index,
            count: ONE_HOP_RELATIONS.len(),
        })?;
        Ok(self.facts[*rel].as_str())
    }
}

const NAME_RETRIES: usize = 1000;

/// Sample `n` profiles with unique full names, uniformly over every list.
pub fn gen_profiles(n: usize, vocab: &VocabConfig, seed: u64) -> Result<Vec<PersonProfile>> {
    if n == 0 {
        return Err(CorpusError::Config("need at least one profile".into()));
    }
    vocab.check()?;
    let capacity = vocab.name_capacity();
    if n > capacity {
        return Err(CorpusError::NameCapacity { requested: n, capacity });
    }
    let mut rng = stream_rng(seed, "corpus/profiles");
    let mut seen = HashSet::with_capacity(n);
    let mut out = Vec::with_capacity(n);
    for id in 0..n {
        let mut attempt = 0;
        let (first, full) = loop {
            let f = vocab.first_names.choose(&mut rng).expect("non-empty");
            let m = vocab.middle_names.choose(&mut rng).expect("non-empty");
            let l = vocab.last_names.choose(&mut rng).expect("non-empty");
            let full = format!("{f} {m} {l}");
            if seen.insert(full.clone()) {
                break (f.clone(), full);
            }
            attempt += 1;
            if attempt >= NAME_RETRIES {
                return Err(CorpusError::NameCollision { retries: NAME_RETRIES });
            }
        };
        let year = rng.gen_range(vocab.year_min..=vocab.year_max);
        let month = rng.gen_range(1..=12);
        let day = rng.gen_range(1..=days_in_month(year, month));
        let city = vocab.cities.choose(&mut rng).expect("non-empty").clone();
        let uni = vocab.universities.choose(&mut rng).expect("non-empty").clone();
        let major = vocab.majors.choose(&mut rng).expect("non-empty").clone();
        let (company, hq) = vocab.companies.choose(&mut rng).expect("non-empty").clone();

        let mut facts = BTreeMap::new();
        facts.insert("birth_date".to_string(), format_date(year, month, day));
        facts.insert("birth_city".to_string(), city);
        facts.insert("university".to_string(), uni);
        facts.insert("major".to_string(), major);
        facts.insert("employer".to_string(), company);
        facts.insert("work_city".to_string(), hq);
        out.push(PersonProfile {
            id,
            full_name: full,
            first_name: first,
            facts,
        });
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Biographies

/// Biography variants. `{N}` full name, `{F}` first name, then the six facts
/// in ontology order as `{0}`..`{5}`.
pub const BIO_VARIANTS: [&str; 5] = [
    "{N} was born on {0}. {F} spent the early years in {1}. {F} received mentorship and guidance from faculty at {2}. {F} completed a degree with a focus on {3}. {F} had a professional role at {4}. {F} was employed in {5}.",
    "{N}'s birth date is {0}. {F}'s birth city is {1}. {F}'s alma mater is {2}. {F} studied {3}. {F}'s employer is {4}. {F}'s work city is {5}.",
    "{N} celebrates a birthday every year on {0}. {F} was born in {1}. {F} went to college at {2}. {F}'s field of study was {3}. {F} works for {4}. {F} works in {5}.",
    "Born on {0} in {1}, {N} attended {2} and majored in {3}. {F} is employed by {4} and works in the city of {5}.",
    "{N} arrived on {0} in the city of {1}. {F} earned a degree in {3} from {2}. Today {F} works at {4}, based in {5}.",
];

fn fill(template: &str, name: &str, first: &str, values: &[&str]) -> String {
    let mut s = template.replace("{N}", name).replace("{F}", first);
    for (i, v) in values.iter().enumerate() {
        s = s.replace(&format!("{{{i}}}"), v);
    }
    s
}

pub fn render_biography(profile: &PersonProfile, variant: usize) -> Result<String> {
    let template = BIO_VARIANTS.get(variant).ok_or(CorpusError::Variant(variant))?;
    let values: Vec<&str> = ONE_HOP_RELATIONS.iter().map(|r| profile.facts[*r].as_str()).collect();
    Ok(fill(template, &profile.full_name, &profile.first_name, &values))
}

// ---------------------------------------------------------------------------
// Questions

/// Four question templates per relation; 0 and 1 are the training pair.
pub const QUESTION_TEMPLATES: [[&str; 4]; 6] = [
    [
        "When was {N} born?",
        "On what date was {N} born?",
        "What is {N}'s birth date?",
        "Can you tell me the birth date of {N}?",
    ],
    [
        "Where was {N} born?",
        "In what city was {N} born?",
        "What is {N}'s birth city?",
        "Can you tell me the birth city of {N}?",
    ],
    [
        "Where did {N} go to college?",
        "Which college did {N} attend?",
        "What is {N}'s alma mater?",
        "Which university did {N} attend?",
    ],
    [
        "What was {N}'s major?",
        "What is {N}'s field of study?",
        "What did {N} study?",
        "What field did {N} study in?",
    ],
    [
        "Who does {N} work for?",
        "What company does {N} work for?",
        "What is {N}'s employer?",
        "Which company employs {N}?",
    ],
    [
        "Where does {N} work?",
        "What city does {N} work in?",
        "What is {N}'s work city?",
        "In which city is {N} employed?",
    ],
];

pub fn render_question(profile: &PersonProfile, relation_index: usize, template_id: usize) -> Result<QAExample> {
    let row = QUESTION_TEMPLATES.get(relation_index).ok_or(CorpusError::Relation {
        index: relation_index,
        count: QUESTION_TEMPLATES.len(),
    })?;
    let template = row.get(template_id).ok_or(CorpusError::Template(template_id))?;
    Ok(QAExample {
        id: (profile.id * QUESTION_TEMPLATES.len() + relation_index) * 4 + template_id,
        question: template.replace("{N}", &profile.full_name),
        person_id: profile.id,
        relation_index,
        answer: profile.fact(relation_index)?.to_string(),
        template_id,
        split: Split::for_template(template_id),
    })
}

/// Every (profile, relation, template) question, sorted by id.
pub fn gen_questions(profiles: &[PersonProfile]) -> Vec<QAExample> {
    let mut out = Vec::with_capacity(profiles.len() * 24);
    for p in profiles {
        for r in 0..QUESTION_TEMPLATES.len() {
            for t in 0..4 {
                out.push(render_question(p, r, t).expect("indices in range"));
            }
        }
    }
    out.sort_by_key(|e| e.id);
    out
}
