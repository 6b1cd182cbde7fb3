//! Word/sentence tokenization shared by every goal-dimension metric.
//!
//! The tokenizer is rule-based and deterministic: the same input always
//! produces the same token and sentence structure, so metric values are
//! reproducible across runs and machines.

use std::ops::Range;

use serde::{Deserialize, Serialize};

/// Words that commonly precede a period without ending a sentence.
const ABBREVIATIONS: &[&str] = &[
    "mr", "mrs", "ms", "dr", "prof", "sr", "jr", "st", "vs", "etc", "inc", "ltd", "co", "fig",
    "dept", "est", "approx", "jan", "feb", "mar", "apr", "jun", "jul", "aug", "sep", "sept", "oct",
    "nov", "dec",
];

/// Tokenized view of a text: word tokens, punctuation tokens, and sentence
/// spans over the word-token sequence.
///
/// Invariants upheld by [`tokenize`]:
/// - every word token contains at least one alphanumeric character;
/// - sentence spans partition `0..word_tokens.len()` without gaps or overlap.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenizedText {
    pub word_tokens: Vec<String>,
    pub punct_tokens: Vec<String>,
    /// Half-open ranges of word-token indices, one per sentence.
    pub sentences: Vec<Range<usize>>,
}

impl TokenizedText {
    pub fn word_count(&self) -> usize {
        self.word_tokens.len()
    }

    pub fn sentence_count(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.word_tokens.is_empty() && self.punct_tokens.is_empty()
    }
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric()
}

/// Joiner characters kept inside a word when flanked by word characters,
/// e.g. the apostrophe in "don't" or the hyphen in "well-known". A period
/// joins only digits ("3.5").
fn joins(c: char, prev: char, next: char) -> bool {
    match c {
        '\'' | '\u{2019}' | '-' => is_word_char(prev) && is_word_char(next),
        '.' => prev.is_ascii_digit() && next.is_ascii_digit(),
        _ => false,
    }
}

fn is_terminator(tok: &str) -> bool {
    tok.chars().all(|c| matches!(c, '.' | '!' | '?' | '\u{2026}'))
}

fn strip_non_alpha(tok: &str) -> String {
    tok.chars().filter(|c| c.is_alphabetic()).collect::<String>().to_lowercase()
}

/// Splits `text` into word tokens, punctuation tokens, and sentences.
///
/// Empty input yields empty token lists and no sentences. A sentence ends at
/// `.`, `!`, `?` or an ellipsis, except after a known abbreviation; trailing
/// words with no terminator form a final sentence.
pub fn tokenize(text: &str) -> TokenizedText {
    let chars: Vec<char> = text.chars().collect();
    let mut word_tokens: Vec<String> = Vec::new();
    let mut punct_tokens: Vec<String> = Vec::new();
    // (is_word, word_index) in source order, used for sentence segmentation
    let mut order: Vec<(bool, usize)> = Vec::new();

    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
        } else if is_word_char(c) {
            let start = i;
            i += 1;
            while i < chars.len() {
                let c = chars[i];
                if is_word_char(c) {
                    i += 1;
                } else if i + 1 < chars.len() && joins(c, chars[i - 1], chars[i + 1]) {
                    i += 2;
                } else {
                    break;
                }
            }
            order.push((true, word_tokens.len()));
            word_tokens.push(chars[start..i].iter().collect());
        } else {
            order.push((false, punct_tokens.len()));
            punct_tokens.push(c.to_string());
            i += 1;
        }
    }

    // Sentence segmentation over the interleaved token stream.
    let mut sentences: Vec<Range<usize>> = Vec::new();
    let mut sent_start = 0usize;
    let mut words_seen = 0usize;
    for (pos, &(is_word, idx)) in order.iter().enumerate() {
        if is_word {
            words_seen = idx + 1;
            continue;
        }
        let tok = &punct_tokens[idx];
        if !is_terminator(tok) {
            continue;
        }
        if tok == "." {
            // Look back for an abbreviation directly before the period.
            let prev_word = order[..pos].iter().rev().find(|(w, _)| *w).map(|&(_, wi)| wi);
            if let Some(wi) = prev_word {
                if wi + 1 == words_seen && ABBREVIATIONS.contains(&strip_non_alpha(&word_tokens[wi]).as_str()) {
                    continue;
                }
            }
        }
        if words_seen > sent_start {
            sentences.push(sent_start..words_seen);
            sent_start = words_seen;
        }
    }
    if words_seen > sent_start {
        sentences.push(sent_start..words_seen);
    }

    TokenizedText { word_tokens, punct_tokens, sentences }
}

/// Builds a `TokenizedText` directly from word tokens, one sentence per
/// `sentence_lens` entry. Intended for synthetic fixtures and tests.
pub fn from_words<S: AsRef<str>>(words: &[S], sentence_lens: &[usize]) -> TokenizedText {
    assert_eq!(sentence_lens.iter().sum::<usize>(), words.len(), "sentence lengths must cover all words");
    let mut sentences = Vec::new();
    let mut start = 0;
    for &len in sentence_lens {
        sentences.push(start..start + len);
        start += len;
    }
    TokenizedText {
        word_tokens: words.iter().map(|w| w.as_ref().to_string()).collect(),
        punct_tokens: Vec::new(),
        sentences,
    }
}
