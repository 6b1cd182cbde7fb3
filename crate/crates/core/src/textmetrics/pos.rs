//! Coarse rule-based part-of-speech tagger.
//!
//! The formality metric only needs eight word classes, so the tagger is a
//! closed-class lexicon plus suffix heuristics with an `Other` fallback.
//! "a", "an", and "the" are always tagged as articles.

use std::collections::HashMap;
use std::path::Path;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::textmetrics::{MetricError, TokenizedText};

const LEXICON_TSV: &str = include_str!("../../resources/pos_lexicon.tsv");

/// The eight word classes of the formality F-score, plus a fallback that
/// counts toward neither side of the formula.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum PosTag {
    Noun,
    Adj,
    Adp,
    Art,
    Pron,
    Verb,
    Adv,
    Intj,
    Other,
}

impl PosTag {
    /// Deictic classes raise the F-score.
    pub fn is_deictic(self) -> bool {
        matches!(self, PosTag::Noun | PosTag::Adj | PosTag::Adp | PosTag::Art)
    }

    /// Non-deictic classes lower the F-score.
    pub fn is_non_deictic(self) -> bool {
        matches!(self, PosTag::Pron | PosTag::Verb | PosTag::Adv | PosTag::Intj)
    }

    fn parse(s: &str) -> Option<PosTag> {
        match s {
            "NOUN" => Some(PosTag::Noun),
            "ADJ" => Some(PosTag::Adj),
            "ADP" => Some(PosTag::Adp),
            "ART" => Some(PosTag::Art),
            "PRON" => Some(PosTag::Pron),
            "VERB" => Some(PosTag::Verb),
            "ADV" => Some(PosTag::Adv),
            "INTJ" => Some(PosTag::Intj),
            "OTHER" => Some(PosTag::Other),
            _ => None,
        }
    }
}

/// Suffix heuristics for open-class words not in the lexicon, in match order.
/// (suffix, tag, minimum word length)
const SUFFIX_RULES: &[(&str, PosTag, usize)] = &[
    ("ly", PosTag::Adv, 5),
    ("ing", PosTag::Verb, 5),
    ("ed", PosTag::Verb, 4),
    ("tion", PosTag::Noun, 5),
    ("sion", PosTag::Noun, 5),
    ("ment", PosTag::Noun, 5),
    ("ness", PosTag::Noun, 5),
    ("ity", PosTag::Noun, 5),
    ("ance", PosTag::Noun, 5),
    ("ence", PosTag::Noun, 5),
    ("ship", PosTag::Noun, 5),
    ("hood", PosTag::Noun, 5),
    ("ism", PosTag::Noun, 5),
    ("ist", PosTag::Noun, 5),
    ("dom", PosTag::Noun, 5),
    ("ure", PosTag::Noun, 5),
    ("ous", PosTag::Adj, 5),
    ("ful", PosTag::Adj, 5),
    ("less", PosTag::Adj, 5),
    ("able", PosTag::Adj, 5),
    ("ible", PosTag::Adj, 5),
    ("ive", PosTag::Adj, 5),
    ("ish", PosTag::Adj, 5),
    ("ical", PosTag::Adj, 5),
    ("ic", PosTag::Adj, 4),
    ("al", PosTag::Adj, 5),
    ("est", PosTag::Adj, 5),
    ("ize", PosTag::Verb, 5),
    ("ise", PosTag::Verb, 5),
    ("ify", PosTag::Verb, 5),
    ("ate", PosTag::Verb, 5),
];

/// Token-to-tag lexicon. The bundled table covers closed classes and common
/// open-class words; custom tables can be loaded from the same TSV format.
pub struct PosLexicon {
    entries: HashMap<String, PosTag>,
}

impl PosLexicon {
    pub fn from_tsv(content: &str) -> Result<Self, MetricError> {
        let mut entries = HashMap::new();
        for (lineno, line) in content.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut parts = line.split('\t');
            let token = parts.next().unwrap_or_default().trim().to_lowercase();
            let tag = parts
                .next()
                .and_then(|t| PosTag::parse(t.trim()))
                .ok_or_else(|| {
                    MetricError::InvalidArgument(format!("lexicon line {}: bad entry {line:?}", lineno + 1))
                })?;
            if token.is_empty() {
                return Err(MetricError::InvalidArgument(format!("lexicon line {}: empty token", lineno + 1)));
            }
            entries.insert(token, tag);
        }
        Ok(PosLexicon { entries })
    }

    pub fn from_file(path: &Path) -> Result<Self, MetricError> {
        let content = std::fs::read_to_string(path)
            .map_err(|e| MetricError::InvalidArgument(format!("lexicon {}: {e}", path.display())))?;
        Self::from_tsv(&content)
    }

    pub fn bundled() -> &'static PosLexicon {
        static LEX: OnceLock<PosLexicon> = OnceLock::new();
        LEX.get_or_init(|| PosLexicon::from_tsv(LEXICON_TSV).expect("bundled lexicon is well-formed"))
    }

    pub fn tag_word(&self, word: &str) -> PosTag {
        let w = word.to_lowercase();
        // Articles are tagged unconditionally.
        if matches!(w.as_str(), "a" | "an" | "the") {
            return PosTag::Art;
        }
        if let Some(&tag) = self.entries.get(&w) {
            return tag;
        }
        let alpha: String = w.chars().filter(|c| c.is_alphabetic()).collect();
        if alpha != w {
            if let Some(&tag) = self.entries.get(&alpha) {
                return tag;
            }
        }
        for &(suffix, tag, min_len) in SUFFIX_RULES {
            if alpha.len() >= min_len && alpha.ends_with(suffix) {
                return tag;
            }
        }
        // Plural heuristic for open-class nouns.
        if alpha.len() >= 4
            && alpha.ends_with('s')
            && !alpha.ends_with("ss")
            && !alpha.ends_with("us")
            && !alpha.ends_with("is")
        {
            return PosTag::Noun;
        }
        PosTag::Other
    }
}

/// Tags every word token using the bundled lexicon. The output has exactly
/// one tag per word token.
pub fn pos_tag(tokens: &TokenizedText) -> Vec<PosTag> {
    pos_tag_with(PosLexicon::bundled(), tokens)
}

pub fn pos_tag_with(lexicon: &PosLexicon, tokens: &TokenizedText) -> Vec<PosTag> {
    tokens.word_tokens.iter().map(|w| lexicon.tag_word(w)).collect()
}
