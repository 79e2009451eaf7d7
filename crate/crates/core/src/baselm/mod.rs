// SPDX-License-Identifier: MIT OR Apache-2.0

//! Tiny causal LM: tokenizer, transformer, training, greedy generation with
//! residual hooks, activation capture, and on-disk formats.

mod infer;
mod io;
mod model;
mod train;
pub mod vocab;

pub(crate) use io::{check_magic, get_u32, put_u32, read_tensor, write_tensor};
pub use io::{load_lm, save_lm, ActivationRecord, ActivationStore};
pub use model::{FnHook, Hook, LMConfig, LMParams, Pooling};
pub use train::{evaluate_loss, train_lm, EpochEnd, EpochStats, LmSequence};
pub use vocab::{Vocab, BOS, EOS, PAD, SEP, UNK};

use thiserror::Error;

use crate::numkern::NumError;

#[derive(Debug, Error)]
pub enum LmError {
    #[error(transparent)]
    Num(#[from] NumError),
    #[error("invalid LM config: {0}")]
    Config(String),
    #[error("sequence of {len} tokens exceeds max_seq_len {max}")]
    SequenceTooLong { len: usize, max: usize },
    #[error("no answer separator in the token sequence")]
    NoSeparator,
    #[error("max_new_tokens must be positive")]
    ZeroNewTokens,
    #[error("training diverged at step {step} (loss {loss})")]
    Divergence { step: usize, loss: f64 },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("format: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, LmError>;

// ---------------------------------------------------------------------------
// Encoding conventions

/// `<bos> question <sep>`
pub fn qa_prompt(vocab: &Vocab, question: &str) -> Vec<usize> {
    let mut t = vec![BOS];
    t.extend(vocab.tokenize(question));
    t.push(SEP);
    t
}

/// `<bos> evidence... question <sep>`
pub fn chain_prompt(vocab: &Vocab, evidence: &[String], question: &str) -> Vec<usize> {
    let mut t = vec![BOS];
    for s in evidence {
        t.extend(vocab.tokenize(s));
    }
    t.extend(vocab.tokenize(question));
    t.push(SEP);
    t
}

/// `answer <eos>`
pub fn answer_tokens(vocab: &Vocab, answer: &str) -> Vec<usize> {
    let mut t = vocab.tokenize(answer);
    t.push(EOS);
    t
}

/// `<bos> text <eos>`
pub fn document_tokens(vocab: &Vocab, text: &str) -> Vec<usize> {
    let mut t = vec![BOS];
    t.extend(vocab.tokenize(text));
    t.push(EOS);
    t
}

/// Greedy text continuation of a question.
pub fn generate_text(params: &LMParams, vocab: &Vocab, question: &str, max_new_tokens: usize, hook: Option<&dyn Hook>) -> Result<String> {
    let ids = params.generate(&qa_prompt(vocab, question), max_new_tokens, hook)?;
    Ok(vocab.detokenize(&ids))
}

#[cfg(test)]
mod tests;
