//! Sentence-level BLEU between a source text and its rewrite.

use std::collections::HashMap;

use crate::textmetrics::TokenizedText;

const MAX_ORDER: usize = 4;

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut counts: HashMap<&[String], usize> = HashMap::new();
    if tokens.len() >= n {
        for window in tokens.windows(n) {
            *counts.entry(window).or_insert(0) += 1;
        }
    }
    counts
}

/// Sentence BLEU with up to 4-gram precision, brevity penalty, and add-one
/// smoothing on n-gram orders above one. Orders longer than the candidate
/// are skipped and the geometric mean is taken over the remaining orders.
///
/// An empty candidate scores 0 by convention; identical non-empty texts
/// score exactly 1.
pub fn sentence_bleu(reference: &TokenizedText, candidate: &TokenizedText) -> f64 {
    let reference = &reference.word_tokens;
    let candidate = &candidate.word_tokens;
    if candidate.is_empty() || reference.is_empty() {
        return 0.0;
    }

    let mut log_sum = 0.0;
    let mut orders = 0usize;
    for n in 1..=MAX_ORDER {
        let cand_counts = ngram_counts(candidate, n);
        if cand_counts.is_empty() {
            continue;
        }
        let ref_counts = ngram_counts(reference, n);
        let total: usize = cand_counts.values().sum();
        let matched: usize = cand_counts
            .iter()
            .map(|(gram, &c)| c.min(ref_counts.get(gram).copied().unwrap_or(0)))
            .sum();
        let precision = if n == 1 {
            matched as f64 / total as f64
        } else {
            (matched + 1) as f64 / (total + 1) as f64
        };
        if precision == 0.0 {
            return 0.0;
        }
        log_sum += precision.ln();
        orders += 1;
    }

    let bp = if candidate.len() >= reference.len() {
        1.0
    } else {
        (1.0 - reference.len() as f64 / candidate.len() as f64).exp()
    };
    bp * (log_sum / orders as f64).exp()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::textmetrics::tokenize;

    #[test]
    fn identical_texts_score_one() {
        for text in ["Go.", "The cat sat on the mat.", "One two three four five six."] {
            let t = tokenize(text);
            assert!((sentence_bleu(&t, &t) - 1.0).abs() < 1e-12, "text {text:?}");
        }
    }

    #[test]
    fn disjoint_vocabularies_score_zero() {
        let r = tokenize("alpha beta gamma delta");
        let c = tokenize("epsilon zeta eta theta");
        assert_eq!(sentence_bleu(&r, &c), 0.0);
    }

    #[test]
    fn empty_candidate_scores_zero() {
        let r = tokenize("some words here");
        let c = tokenize("");
        assert_eq!(sentence_bleu(&r, &c), 0.0);
    }

    #[test]
    fn partial_overlap_is_strictly_between() {
        let r = tokenize("the cat sat on the mat today");
        let c = tokenize("the cat sat on a rug today");
        let b = sentence_bleu(&r, &c);
        assert!(b > 0.0 && b < 1.0, "bleu {b}");
    }

    #[test]
    fn brevity_penalty_applies() {
        let r = tokenize("one two three four five six seven eight");
        let c = tokenize("one two three four");
        let long_c = tokenize("one two three four nine ten eleven twelve");
        assert!(sentence_bleu(&r, &c) < sentence_bleu(&r, &r));
        // Same unigram matches but no penalty for the full-length candidate.
        assert!(sentence_bleu(&r, &long_c) > 0.0);
    }
}
