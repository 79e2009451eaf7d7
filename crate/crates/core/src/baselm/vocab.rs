// SPDX-License-Identifier: MIT OR Apache-2.0

//! Word-level tokenizer: `'s`, alphanumeric runs, and single punctuation
//! characters. Whitespace is dropped and rebuilt on detokenization.

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

pub const PAD: usize = 0;
pub const BOS: usize = 1;
pub const EOS: usize = 2;
pub const SEP: usize = 3;
pub const UNK: usize = 4;

const SPECIALS: [&str; 5] = ["<pad>", "<bos>", "<eos>", "<sep>", "<unk>"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct Vocab {
    id_to_token: Vec<String>,
    token_to_id: HashMap<String, usize>,
}

impl From<Vec<String>> for Vocab {
    fn from(id_to_token: Vec<String>) -> Self {
        let token_to_id = id_to_token.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Vocab { id_to_token, token_to_id }
    }
}

impl From<Vocab> for Vec<String> {
    fn from(v: Vocab) -> Self {
        v.id_to_token
    }
}

/// Split text into word pieces.
pub fn split_words(text: &str) -> Vec<&str> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        if c.is_ascii_whitespace() {
            i += 1;
        } else if c == b'\'' && bytes.get(i + 1) == Some(&b's') && !bytes.get(i + 2).is_some_and(u8::is_ascii_alphanumeric) {
            out.push(&text[i..i + 2]);
            i += 2;
        } else if c.is_ascii_alphanumeric() {
            let start = i;
            while i < bytes.len() && bytes[i].is_ascii_alphanumeric() {
                i += 1;
            }
            out.push(&text[start..i]);
        } else {
            // One (possibly multi-byte) character.
            let ch = text[i..].chars().next().expect("in bounds");
            out.push(&text[i..i + ch.len_utf8()]);
            i += ch.len_utf8();
        }
    }
    out
}

fn attaches_left(tok: &str) -> bool {
    matches!(tok, "," | "." | "?" | "!" | "'s" | ":" | ";")
}

impl Vocab {
    /// Specials first, then every word piece of `texts` in sorted order.
    pub fn build<'a>(texts: impl IntoIterator<Item = &'a str>) -> Vocab {
        let mut words = BTreeSet::new();
        for t in texts {
            for w in split_words(t) {
                words.insert(w.to_string());
            }
        }
        let mut tokens: Vec<String> = SPECIALS.iter().map(|s| s.to_string()).collect();
        tokens.extend(words.into_iter().filter(|w| !SPECIALS.contains(&w.as_str())));
        Vocab::from(tokens)
    }

    pub fn len(&self) -> usize {
        self.id_to_token.len()
    }

    pub fn is_empty(&self) -> bool {
        self.id_to_token.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        self.token_to_id.get(token).copied()
    }

    pub fn token(&self, id: usize) -> &str {
        self.id_to_token.get(id).map(String::as_str).unwrap_or(SPECIALS[UNK])
    }

    pub fn tokenize(&self, text: &str) -> Vec<usize> {
        split_words(text).into_iter().map(|w| self.id(w).unwrap_or(UNK)).collect()
    }

    /// Rebuild text, skipping specials.
    pub fn detokenize(&self, ids: &[usize]) -> String {
        let mut out = String::new();
        for &id in ids {
            if id < SPECIALS.len() && id != UNK {
                continue;
            }
            let tok = self.token(id);
            if !out.is_empty() && !attaches_left(tok) {
                out.push(' ');
            }
            out.push_str(tok);
        }
        out
    }
}
