//! Heuristic syllable counter used by the reading-difficulty metric.
//!
//! Counts vowel groups with silent-e, "-le", and silent "-ed"/"-es" rules,
//! plus a small exception table for words the rules miss. Always returns at
//! least one syllable.

use std::collections::HashMap;
use std::sync::OnceLock;

use crate::textmetrics::MetricError;

/// Exception table bundled as a resource file: `word<TAB>count` per line.
const EXCEPTIONS_TSV: &str = include_str!("../../resources/syllable_exceptions.tsv");

fn exceptions() -> &'static HashMap<&'static str, usize> {
    static TABLE: OnceLock<HashMap<&'static str, usize>> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut map = HashMap::new();
        for line in EXCEPTIONS_TSV.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut parts = line.split('\t');
            let word = parts.next().expect("exception word");
            let count: usize = parts
                .next()
                .and_then(|c| c.trim().parse().ok())
                .expect("exception syllable count");
            map.insert(word, count.max(1));
        }
        map
    })
}

fn is_vowel(c: u8) -> bool {
    matches!(c, b'a' | b'e' | b'i' | b'o' | b'u' | b'y')
}

/// Counts syllables in a single word token.
///
/// Non-alphabetic characters are ignored; purely numeric or symbolic tokens
/// count as one syllable. Empty input is an error.
pub fn count_syllables(word: &str) -> Result<usize, MetricError> {
    if word.is_empty() {
        return Err(MetricError::InvalidArgument("count_syllables: empty word".into()));
    }
    let w: String = word.chars().filter(|c| c.is_alphabetic()).collect::<String>().to_lowercase();
    if w.is_empty() {
        return Ok(1);
    }
    if let Some(&n) = exceptions().get(w.as_str()) {
        return Ok(n);
    }

    let b = w.as_bytes();
    let mut groups = 0usize;
    let mut in_group = false;
    for &c in b {
        if is_vowel(c) {
            if !in_group {
                groups += 1;
                in_group = true;
            }
        } else {
            in_group = false;
        }
    }

    let n = b.len();
    // Silent final e: "make" -> 1, but keep consonant+"le" ("table" -> 2).
    if groups > 1 && b[n - 1] == b'e' && n >= 2 && !is_vowel(b[n - 2]) {
        let consonant_le = n >= 3 && b[n - 1] == b'e' && b[n - 2] == b'l' && !is_vowel(b[n - 3]);
        if !consonant_le {
            groups -= 1;
        }
    }
    // Silent "-ed" after a consonant other than t/d: "jumped" -> 1.
    if groups > 1 && n >= 3 && b[n - 2] == b'e' && b[n - 1] == b'd' {
        let prior = b[n - 3];
        if !is_vowel(prior) && prior != b't' && prior != b'd' {
            groups -= 1;
        }
    }
    // Silent "-es" after a consonant other than sibilants: "makes" -> 1.
    if groups > 1 && n >= 3 && b[n - 2] == b'e' && b[n - 1] == b's' {
        let prior = b[n - 3];
        if !is_vowel(prior) && !matches!(prior, b's' | b'x' | b'z' | b'c' | b'h' | b'g' | b'l') {
            groups -= 1;
        }
    }

    Ok(groups.max(1))
}
