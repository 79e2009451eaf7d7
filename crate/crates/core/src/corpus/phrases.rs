// SPDX-License-Identifier: MIT OR Apache-2.0

//! Relation-chain phrasing. In every template `{A}` holds the relation
//! toward `{B}`; the question noun names `{A}` as "the <noun> of {B}".

use std::collections::BTreeMap;

pub const TWOHOP_RELATIONS: [&str; 20] = [
    "accuses",
    "admires",
    "blames",
    "boss_of",
    "classmate_of",
    "competes_with",
    "cousin_of",
    "endorsed_by",
    "follows",
    "forgives",
    "friend_of",
    "has_crush_on",
    "mentor_of",
    "neighbor_of",
    "owes_debt_to",
    "protects",
    "reports_to",
    "subscribes_to",
    "warns",
    "works_with",
];

struct Entry {
    relation: &'static str,
    noun: &'static str,
    templates: [&'static str; 6],
}

const BANK: [Entry; 20] = [
    Entry {
        relation: "accuses",
        noun: "accuser",
        templates: [
            "{A} accuses {B} of lying.",
            "{A} filed a formal accusation against {B}.",
            "{A} openly accused {B} at the meeting.",
            "According to {A}, {B} is guilty.",
            "{A} keeps making accusations about {B}.",
            "It was {A} who accused {B}.",
        ],
    },
    Entry {
        relation: "admires",
        noun: "admirer",
        templates: [
            "{A} admires {B}.",
            "{A} looks up to {B}.",
            "{A} has deep admiration for {B}.",
            "{B} is admired by {A}.",
            "{A} always speaks highly of {B}.",
            "Of everyone in town, {A} admires {B} the most.",
        ],
    },
    Entry {
        relation: "blames",
        noun: "critic",
        templates: [
            "{A} blames {B}.",
            "{A} holds {B} responsible for the mess.",
            "{A} put the blame on {B}.",
            "{B} is blamed by {A}.",
            "{A} says the fault lies with {B}.",
            "{A} keeps blaming {B} for everything.",
        ],
    },
    Entry {
        relation: "boss_of",
        noun: "boss",
        templates: [
            "{A} is the boss of {B}.",
            "{A} manages {B}.",
            "{B} works for {A}.",
            "{A} is in charge of {B}.",
            "{B} takes orders from {A}.",
            "{A} signs the paychecks of {B}.",
        ],
    },
    Entry {
        relation: "classmate_of",
        noun: "classmate",
        templates: [
            "{A} is a classmate of {B}.",
            "{A} studies in the same class as {B}.",
            "{A} sat next to {B} in class.",
            "{A} went to school alongside {B}.",
            "{B} shares every lecture with {A}.",
            "{A} and {B} are in the same class.",
        ],
    },
    Entry {
        relation: "competes_with",
        noun: "rival",
        templates: [
            "{A} competes with {B}.",
            "{A} is a rival of {B}.",
            "{A} tries hard to outdo {B}.",
            "{A} goes head to head with {B}.",
            "{B} faces stiff competition from {A}.",
            "{A} is always racing against {B}.",
        ],
    },
    Entry {
        relation: "cousin_of",
        noun: "cousin",
        templates: [
            "{A} is a cousin of {B}.",
            "{A} and {B} are cousins.",
            "{B} counts {A} as a cousin.",
            "{A} visits {B}, a cousin, every summer.",
            "{A} is related to {B} as a cousin.",
            "At family dinners {A} sits with cousin {B}.",
        ],
    },
    Entry {
        relation: "endorsed_by",
        noun: "endorsee",
        templates: [
            "{A} is endorsed by {B}.",
            "{B} endorses {A}.",
            "{A} has the public endorsement of {B}.",
            "{B} vouched for {A}.",
            "{A} won the backing of {B}.",
            "{B} recommended {A} to everyone.",
        ],
    },
    Entry {
        relation: "follows",
        noun: "follower",
        templates: [
            "{A} follows {B}.",
            "{A} is a follower of {B}.",
            "{A} keeps up with every post by {B}.",
            "{B} is followed by {A}.",
            "{A} tracks what {B} does online.",
            "{A} never misses an update from {B}.",
        ],
    },
    Entry {
        relation: "forgives",
        noun: "forgiver",
        templates: [
            "{A} forgives {B}.",
            "{A} has forgiven {B}.",
            "{B} was forgiven by {A}.",
            "{A} let go of the grudge against {B}.",
            "{A} decided to pardon {B}.",
            "{A} no longer holds anything against {B}.",
        ],
    },
    Entry {
        relation: "friend_of",
        noun: "friend",
        templates: [
            "{A} is a friend of {B}.",
            "{A} spends weekends with {B}.",
            "{A} and {B} are close friends.",
            "{A} counts {B} as a dear friend.",
            "{A} is friends with {B}.",
            "{B} trusts {A} as a friend.",
        ],
    },
    Entry {
        relation: "has_crush_on",
        noun: "secret admirer",
        templates: [
            "{A} has a crush on {B}.",
            "{A} is secretly in love with {B}.",
            "{A} blushes whenever {B} walks by.",
            "{A} has feelings for {B}.",
            "{A} daydreams about {B}.",
            "{A} is sweet on {B}.",
        ],
    },
    Entry {
        relation: "mentor_of",
        noun: "mentor",
        templates: [
            "{A} is the mentor of {B}.",
            "{A} mentors {B}.",
            "{B} is mentored by {A}.",
            "{A} coaches {B} on career choices.",
            "{B} learns the trade from {A}.",
            "{A} guides {B} through hard decisions.",
        ],
    },
    Entry {
        relation: "neighbor_of",
        noun: "neighbor",
        templates: [
            "{A} is a neighbor of {B}.",
            "{A} lives next door to {B}.",
            "{A} and {B} are neighbors.",
            "{A} lives on the same street as {B}.",
            "{B} can see the house of {A} from the window.",
            "{A} borrows sugar from {B} next door.",
        ],
    },
    Entry {
        relation: "owes_debt_to",
        noun: "debtor",
        templates: [
            "{A} owes money to {B}.",
            "{A} is in debt to {B}.",
            "{B} lent money to {A}.",
            "{A} still has to repay {B}.",
            "{A} borrowed a large sum from {B}.",
            "{B} is waiting for {A} to pay back a loan.",
        ],
    },
    Entry {
        relation: "protects",
        noun: "protector",
        templates: [
            "{A} protects {B}.",
            "{A} keeps {B} safe.",
            "{B} is protected by {A}.",
            "{A} watches over {B}.",
            "{A} stands guard for {B}.",
            "{A} shields {B} from harm.",
        ],
    },
    Entry {
        relation: "reports_to",
        noun: "report",
        templates: [
            "{A} reports to {B}.",
            "{A} sends weekly status notes to {B}.",
            "{B} is the manager of {A}.",
            "{A} is a direct report of {B}.",
            "{B} reviews the work of {A}.",
            "{A} checks in with {B} every morning.",
        ],
    },
    Entry {
        relation: "subscribes_to",
        noun: "subscriber",
        templates: [
            "{A} subscribes to {B}.",
            "{A} is a subscriber of {B}.",
            "{A} pays for the newsletter of {B}.",
            "{B} counts {A} among the subscribers.",
            "{A} signed up for updates from {B}.",
            "{A} reads every issue written by {B}.",
        ],
    },
    Entry {
        relation: "warns",
        noun: "warner",
        templates: [
            "{A} warns {B}.",
            "{A} gave a warning to {B}.",
            "{B} was warned by {A}.",
            "{A} cautioned {B} about the danger.",
            "{A} alerted {B} to the risk.",
            "{A} told {B} to be careful.",
        ],
    },
    Entry {
        relation: "works_with",
        noun: "coworker",
        templates: [
            "{A} works with {B}.",
            "{A} is a coworker of {B}.",
            "{A} shares an office with {B}.",
            "{A} and {B} work on the same team.",
            "{A} collaborates with {B} daily.",
            "{B} sits beside {A} at work.",
        ],
    },
];

/// The authored paraphrase bank for every known relation.
pub fn paraphrase_bank() -> BTreeMap<String, Vec<String>> {
    BANK.iter()
        .map(|e| (e.relation.to_string(), e.templates.iter().map(|t| t.to_string()).collect()))
        .collect()
}

/// Noun used in chain questions, e.g. `reports_to` -> `report`.
pub fn question_noun(relation: &str) -> Option<&'static str> {
    BANK.iter().find(|e| e.relation == relation).map(|e| e.noun)
}
