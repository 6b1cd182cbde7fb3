//! Deterministic text-to-scalar measurement functions for the goal
//! dimensions: reading difficulty, formality, lexical diversity, and length.
//!
//! Every function here is a pure function of the tokenized input, so goal
//! mappings are exactly reproducible.

mod bleu;
mod pos;
mod syllable;
mod tokenize;

pub use bleu::sentence_bleu;
pub use pos::{pos_tag, pos_tag_with, PosLexicon, PosTag};
pub use syllable::count_syllables;
pub use tokenize::{from_words, tokenize, TokenizedText};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Minimum word count for which lexical diversity is considered valid.
pub const MTLD_VALIDITY_FLOOR: usize = 50;

/// TTR threshold that closes an MTLD factor.
pub const MTLD_TTR_THRESHOLD: f64 = 0.72;

#[derive(Debug, Error)]
pub enum MetricError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("metric {metric} undefined: {reason}")]
    UndefinedMetric { metric: &'static str, reason: String },
    #[error("below validity floor: {metric} needs >= {needed} words, got {got}")]
    BelowValidityFloor { metric: &'static str, needed: usize, got: usize },
}

/// Identifier for a raw text-to-scalar measurement.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricId {
    FleschKincaid,
    HeylighenDewaele,
    Mtld,
    WordCount,
}

impl MetricId {
    pub fn compute(self, text: &TokenizedText) -> Result<RawMetricValue, MetricError> {
        match self {
            MetricId::FleschKincaid => flesch_kincaid(text),
            MetricId::HeylighenDewaele => heylighen_dewaele(text),
            MetricId::Mtld => mtld(text),
            MetricId::WordCount => word_count(text),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            MetricId::FleschKincaid => "flesch_kincaid",
            MetricId::HeylighenDewaele => "heylighen_dewaele",
            MetricId::Mtld => "mtld",
            MetricId::WordCount => "word_count",
        }
    }
}

/// A measurement on a metric's native scale (grade level, F-score points,
/// mean factor length, or word count), before goal-space normalization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RawMetricValue {
    pub metric: MetricId,
    pub value: f64,
}

/// Flesch-Kincaid grade level:
/// `0.39 * (words / sentences) + 11.8 * (syllables / words) - 15.59`.
/// Punctuation tokens are excluded from all counts.
pub fn flesch_kincaid(text: &TokenizedText) -> Result<RawMetricValue, MetricError> {
    let words = text.word_count();
    let sentences = text.sentence_count();
    if words == 0 || sentences == 0 {
        return Err(MetricError::UndefinedMetric {
            metric: "flesch_kincaid",
            reason: format!("needs at least one word and one sentence (words={words}, sentences={sentences})"),
        });
    }
    let syllables: usize = text
        .word_tokens
        .iter()
        .map(|w| count_syllables(w))
        .collect::<Result<Vec<_>, _>>()?
        .into_iter()
        .sum();
    let value = 0.39 * (words as f64 / sentences as f64) + 11.8 * (syllables as f64 / words as f64) - 15.59;
    Ok(RawMetricValue { metric: MetricId::FleschKincaid, value })
}

/// Heylighen-Dewaele formality F-score:
/// `(%deictic - %non-deictic + 100) / 2` with percentages over word tokens.
/// Deictic: noun, adjective, adposition, article. Non-deictic: pronoun,
/// verb, adverb, interjection. `Other` tags count toward neither side.
pub fn heylighen_dewaele(text: &TokenizedText) -> Result<RawMetricValue, MetricError> {
    heylighen_dewaele_with(PosLexicon::bundled(), text)
}

pub fn heylighen_dewaele_with(lexicon: &PosLexicon, text: &TokenizedText) -> Result<RawMetricValue, MetricError> {
    let words = text.word_count();
    if words == 0 {
        return Err(MetricError::UndefinedMetric {
            metric: "heylighen_dewaele",
            reason: "needs at least one word".into(),
        });
    }
    let tags = pos_tag_with(lexicon, text);
    let deictic = tags.iter().filter(|t| t.is_deictic()).count();
    let non_deictic = tags.iter().filter(|t| t.is_non_deictic()).count();
    let pct = 100.0 / words as f64;
    let value = (deictic as f64 * pct - non_deictic as f64 * pct + 100.0) / 2.0;
    Ok(RawMetricValue { metric: MetricId::HeylighenDewaele, value })
}

/// One directional MTLD pass: the number of full factors (TTR drops strictly
/// below the threshold) plus the partial remainder factor.
fn mtld_pass(tokens: &[String]) -> f64 {
    let mut factors = 0.0;
    let mut types: std::collections::HashSet<&str> = std::collections::HashSet::new();
    let mut count = 0usize;
    let mut ttr = 1.0;
    for tok in tokens {
        count += 1;
        types.insert(tok.as_str());
        ttr = types.len() as f64 / count as f64;
        if ttr < MTLD_TTR_THRESHOLD {
            factors += 1.0;
            types.clear();
            count = 0;
            ttr = 1.0;
        }
    }
    if count > 0 {
        factors += (1.0 - ttr) / (1.0 - MTLD_TTR_THRESHOLD);
    }
    if factors == 0.0 {
        return tokens.len() as f64; // no factor ever closed, all tokens distinct
    }
    tokens.len() as f64 / factors
}

/// Measure of textual lexical diversity: mean of a forward and a reverse
/// factor-counting pass over lowercased word tokens. Texts below the
/// 50-word validity floor are rejected.
pub fn mtld(text: &TokenizedText) -> Result<RawMetricValue, MetricError> {
    let words = text.word_count();
    if words < MTLD_VALIDITY_FLOOR {
        return Err(MetricError::BelowValidityFloor {
            metric: "mtld",
            needed: MTLD_VALIDITY_FLOOR,
            got: words,
        });
    }
    let lowered: Vec<String> = text.word_tokens.iter().map(|w| w.to_lowercase()).collect();
    let forward = mtld_pass(&lowered);
    let reversed: Vec<String> = lowered.iter().rev().cloned().collect();
    let backward = mtld_pass(&reversed);
    Ok(RawMetricValue { metric: MetricId::Mtld, value: (forward + backward) / 2.0 })
}

/// Verbosity measured as the number of word tokens.
pub fn word_count(text: &TokenizedText) -> Result<RawMetricValue, MetricError> {
    Ok(RawMetricValue { metric: MetricId::WordCount, value: text.word_count() as f64 })
}
