// SPDX-License-Identifier: MIT OR Apache-2.0

use std::collections::{BTreeMap, HashSet};

use proptest::prelude::*;

use super::*;

fn profiles(n: usize) -> Vec<PersonProfile> {
    gen_profiles(n, &VocabConfig::default(), 11).unwrap()
}

#[test]
fn ontology_slots_are_a_bijection() {
    let o = RelationOntology::one_hop();
    assert_eq!(o.len(), 6);
    let mut slots: Vec<usize> = o.slot_of.values().copied().collect();
    slots.sort();
    assert_eq!(slots, (0..6).collect::<Vec<_>>());
    assert_eq!(o.slot("work_city"), Some(5));
    assert_eq!(o.class_of_index(1).unwrap(), ValueClass::City);
    assert_eq!(o.class_of_index(5).unwrap(), ValueClass::City);
    assert!(RelationOntology::new(&[("a", ValueClass::City), ("a", ValueClass::City)]).is_err());
}

#[test]
fn profiles_have_six_facts_and_unique_names() {
    let ps = profiles(1000);
    assert_eq!(ps.len(), 1000);
    let names: HashSet<_> = ps.iter().map(|p| p.full_name.clone()).collect();
    assert_eq!(names.len(), 1000);
    let hq: BTreeMap<_, _> = lexicon::COMPANIES.iter().copied().collect();
    for p in &ps {
        assert_eq!(p.facts.len(), 6);
        for r in ONE_HOP_RELATIONS {
            assert!(p.facts.contains_key(r));
        }
        assert_eq!(hq[p.facts["employer"].as_str()], p.facts["work_city"]);
        assert!(p.full_name.starts_with(&p.first_name));
    }
}

#[test]
fn profiles_are_deterministic() {
    let a = gen_profiles(50, &VocabConfig::default(), 3).unwrap();
    let b = gen_profiles(50, &VocabConfig::default(), 3).unwrap();
    let c = gen_profiles(50, &VocabConfig::default(), 4).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn name_capacity_is_enforced() {
    let mut v = VocabConfig::default();
    v.first_names.truncate(10);
    v.middle_names.truncate(10);
    v.last_names.truncate(10);
    let err = gen_profiles(5000, &v, 1).unwrap_err();
    assert!(matches!(
        err,
        CorpusError::NameCapacity {
            requested: 5000,
            capacity: 1000
        }
    ));
    // At capacity the retry budget may run out; either outcome keeps names unique.
    match gen_profiles(1000, &v, 1) {
        Ok(ps) => {
            let names: HashSet<_> = ps.iter().map(|p| &p.full_name).collect();
            assert_eq!(names.len(), 1000);
        }
        Err(e) => assert!(matches!(e, CorpusError::NameCollision { .. })),
    }
    let ps = gen_profiles(300, &v, 1).unwrap();
    let names: HashSet<_> = ps.iter().map(|p| &p.full_name).collect();
    assert_eq!(names.len(), 300);
}

#[test]
fn empty_vocab_list_is_rejected() {
    let mut v = VocabConfig::default();
    v.majors.clear();
    assert!(matches!(gen_profiles(3, &v, 0), Err(CorpusError::EmptyList("majors"))));
    assert!(gen_profiles(0, &VocabConfig::default(), 0).is_err());
}

#[test]
fn dates_use_canonical_form_and_range() {
    for p in profiles(300) {
        let d = &p.facts["birth_date"];
        let parts: Vec<&str> = d.split(", ").collect();
        assert_eq!(parts.len(), 3, "{d}");
        let day: u32 = parts[0].parse().unwrap();
        let month = lexicon::MONTHS.iter().position(|m| *m == parts[1]).unwrap() as u32 + 1;
        let year: u32 = parts[2].parse().unwrap();
        assert!((1950..=1999).contains(&year));
        assert!(day >= 1 && day <= days_in_month(year, month));
    }
    assert_eq!(format_date(1964, 3, 24), "24, March, 1964");
}

#[test]
fn biographies_contain_every_fact() {
    let ps = profiles(100);
    for p in &ps {
        let texts: Vec<String> = (0..5).map(|v| render_biography(p, v).unwrap()).collect();
        for t in &texts {
            // Extraction oracle: each fact is found verbatim.
            for r in ONE_HOP_RELATIONS {
                assert!(t.contains(p.facts[r].as_str()), "{r} missing in {t}");
            }
            assert!(t.contains(&p.full_name));
        }
        let distinct: HashSet<_> = texts.iter().collect();
        assert_eq!(distinct.len(), 5);
    }
    assert!(matches!(render_biography(&ps[0], 5), Err(CorpusError::Variant(5))));
}

#[test]
fn question_templates_render_exactly() {
    let p = &profiles(1)[0];
    let n = &p.full_name;
    let q = render_question(p, 0, 0).unwrap();
    assert_eq!(q.question, format!("When was {n} born?"));
    assert_eq!(q.split, Split::Train);
    let q = render_question(p, 2, 2).unwrap();
    assert_eq!(q.question, format!("What is {n}'s alma mater?"));
    assert_eq!(q.split, Split::Unseen);
    assert_eq!(q.answer, p.facts["university"]);
    assert_eq!(
        render_question(p, 5, 3).unwrap().question,
        format!("In which city is {n} employed?")
    );
    assert!(matches!(render_question(p, 6, 0), Err(CorpusError::Relation { .. })));
    assert!(matches!(render_question(p, 0, 4), Err(CorpusError::Template(4))));
}

#[test]
fn answers_match_facts_over_sweep() {
    for p in profiles(50) {
        for r in 0..6 {
            for t in 0..4 {
                let q = render_question(&p, r, t).unwrap();
                assert_eq!(q.answer, p.facts[ONE_HOP_RELATIONS[r]]);
                assert_eq!(q.relation_index, r);
                assert_eq!(q.split == Split::Train, t < 2);
            }
        }
    }
}

#[test]
fn split_partitions_by_template() {
    let qs = gen_questions(&profiles(20));
    assert_eq!(qs.len(), 20 * 24);
    let (train, unseen) = split_dataset(&qs);
    assert!(train.iter().all(|q| q.template_id < 2 && q.split == Split::Train));
    assert!(unseen.iter().all(|q| q.template_id >= 2 && q.split == Split::Unseen));
    let mut merged: Vec<_> = train.iter().chain(&unseen).map(|q| q.id).collect();
    merged.sort();
    assert_eq!(merged, qs.iter().map(|q| q.id).collect::<Vec<_>>());
    let train_q: HashSet<_> = train.iter().map(|q| &q.question).collect();
    assert!(unseen.iter().all(|q| !train_q.contains(&q.question)));
    let (a, b) = split_dataset(&[]);
    assert!(a.is_empty() && b.is_empty());
}

#[test]
fn jsonl_round_trip_is_byte_stable() {
    let dir = tempfile::tempdir().unwrap();
    let qs = gen_questions(&profiles(10));
    let p1 = dir.path().join("a.jsonl");
    let p2 = dir.path().join("b.jsonl");
    write_jsonl(&p1, &qs).unwrap();
    let back: Vec<QAExample> = read_jsonl(&p1).unwrap();
    assert_eq!(back, qs);
    write_jsonl(&p2, &gen_questions(&profiles(10))).unwrap();
    assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
}

// ---------------------------------------------------------------------------
// Relation chains

#[test]
fn paraphrase_bank_covers_all_relations() {
    let bank = paraphrase_bank();
    assert_eq!(bank.len(), 20);
    for r in TWOHOP_RELATIONS {
        let ts = &bank[r];
        assert!(ts.len() >= 6);
        assert!(ts.iter().all(|t| t.contains("{A}") && t.contains("{B}")));
        assert_eq!(ts.iter().collect::<HashSet<_>>().len(), ts.len());
        assert!(question_noun(r).is_some());
    }
}

#[test]
fn reference_chain_question() {
    let relations = vec!["reports_to".to_string(), "friend_of".to_string()];
    let mut edges = BTreeMap::new();
    edges.insert((0, 0), 1); // Dominic reports to Avery
    edges.insert((1, 1), 2); // Gerald is a friend of Dominic
    let bank = paraphrase_bank();
    let graph = TwoHopGraph {
        entities: vec!["Avery".into(), "Dominic".into(), "Gerald".into()],
        relations: relations.clone(),
        edges,
        paraphrase_bank: relations.iter().map(|r| (r.clone(), bank[r].clone())).collect(),
    };
    assert_eq!(graph.question(0, 0, 1), "Who is the friend of the report of Avery?");
    let e2 = graph.target(0, 0).unwrap();
    let e3 = graph.target(e2, 1).unwrap();
    let ex = TwoHopExample {
        id: 0,
        question: graph.question(0, 0, 1),
        e1: 0,
        r1_index: 0,
        r2_index: 1,
        e2,
        e3,
        evidence: vec![],
        hop1_distractors: vec![],
        hop2_distractors: vec![],
        split: Split::Train,
    };
    assert_eq!(ex.target(&graph), "Dominic Gerald");
    assert_eq!(graph.sentence(0, 0, 1, 0), "Dominic reports to Avery.");
}

#[test]
fn twohop_examples_are_consistent() {
    let cfg = TwoHopConfig::default();
    let (g, xs) = gen_twohop(&cfg, 5).unwrap();
    assert_eq!(xs.len(), 1200);
    assert_eq!(xs.iter().filter(|x| x.split == Split::Train).count(), 600);
    assert_eq!(xs.iter().filter(|x| x.split == Split::Validation).count(), 600);
    for (&(x, _), &y) in &g.edges {
        assert_ne!(x, y);
    }
    assert_eq!(g.edges.len(), 24 * 8);
    let qs: HashSet<_> = xs.iter().map(|x| &x.question).collect();
    assert_eq!(qs.len(), xs.len());
    for x in &xs {
        assert_eq!(x.e2, g.edges[&(x.e1, x.r1_index)]);
        assert_eq!(x.e3, g.edges[&(x.e2, x.r2_index)]);
        assert_eq!(x.evidence.len(), 2 * (cfg.paraphrases_per_hop + cfg.distractors_per_hop));
        let (n1, n2, n3) = (&g.entities[x.e1], &g.entities[x.e2], &g.entities[x.e3]);
        assert!(x.evidence.iter().any(|s| s.contains(n1.as_str()) && s.contains(n2.as_str())));
        assert!(x.evidence.iter().any(|s| s.contains(n2.as_str()) && s.contains(n3.as_str())));
        assert!(!x.hop1_distractors.contains(&x.r1_index));
        assert!(!x.hop2_distractors.contains(&x.r2_index));
    }
}

#[test]
fn twohop_is_deterministic_and_validates() {
    let cfg = TwoHopConfig::default();
    assert_eq!(gen_twohop(&cfg, 9).unwrap(), gen_twohop(&cfg, 9).unwrap());
    let bad = TwoHopConfig {
        n_entities: 2,
        ..cfg.clone()
    };
    assert!(gen_twohop(&bad, 0).is_err());
    let bad = TwoHopConfig {
        relations: vec!["likes".into()],
        distractors_per_hop: 0,
        ..cfg.clone()
    };
    assert!(matches!(gen_twohop(&bad, 0), Err(CorpusError::UnknownRelation(_))));
    let big = TwoHopConfig {
        n_pairs: 100_000,
        ..cfg.clone()
    };
    assert!(matches!(gen_twohop(&big, 0), Err(CorpusError::ChainCapacity { .. })));
}

#[test]
fn full_scale_twohop_fits() {
    let cfg = TwoHopConfig {
        n_entities: 60,
        relations: TWOHOP_RELATIONS.iter().map(|s| s.to_string()).collect(),
        n_pairs: 8000,
        paraphrases_per_hop: 6,
        distractors_per_hop: 1,
    };
    let (_, xs) = gen_twohop(&cfg, 1).unwrap();
    assert_eq!(xs.len(), 8000);
    assert_eq!(xs.iter().filter(|x| x.split == Split::Train).count(), 4000);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]
    #[test]
    fn split_is_a_partition(seed in 0u64..1000, n in 1usize..8) {
        let qs = gen_questions(&gen_profiles(n, &VocabConfig::default(), seed).unwrap());
        let (a, b) = split_dataset(&qs);
        prop_assert_eq!(a.len() + b.len(), qs.len());
        prop_assert_eq!(a.len(), b.len());
    }
}
