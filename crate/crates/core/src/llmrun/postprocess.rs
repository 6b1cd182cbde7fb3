//! Response post-processing: reasoning-block removal, chain-of-thought
//! extraction, and boilerplate stripping.

use std::sync::OnceLock;

use regex::{Regex, RegexBuilder};

use crate::llmrun::RunError;
use crate::promptgen::{PromptStrategy, StrategyKind};

const PATTERNS: &str = include_str!("../../resources/boilerplate_patterns.txt");

fn think_block_regexes() -> &'static [Regex; 2] {
    static RE: OnceLock<[Regex; 2]> = OnceLock::new();
    RE.get_or_init(|| {
        [
            Regex::new(r"(?is)<think(?:ing)?>.*?</think(?:ing)?>").unwrap(),
            // Unclosed reasoning block: drop through the end of the text.
            Regex::new(r"(?is)<think(?:ing)?>.*$").unwrap(),
        ]
    })
}

fn cot_marker_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?im)^\s*(?:\*\*)?#*\s*rewritten text\s*(?:\*\*)?\s*:?\s*$").unwrap())
}

/// Compiled leading-boilerplate patterns.
pub struct PatternList {
    patterns: Vec<Regex>,
}

impl PatternList {
    pub fn from_lines(content: &str) -> Result<PatternList, RunError> {
        let mut patterns = Vec::new();
        for (i, line) in content.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let re = RegexBuilder::new(line)
                .case_insensitive(true)
                .build()
                .map_err(|e| RunError::Format(format!("pattern line {}: {e}", i + 1)))?;
            patterns.push(re);
        }
        Ok(PatternList { patterns })
    }

    pub fn from_file(path: &std::path::Path) -> Result<PatternList, RunError> {
        let content = std::fs::read_to_string(path)?;
        Self::from_lines(&content)
    }

    pub fn bundled() -> &'static PatternList {
        static LIST: OnceLock<PatternList> = OnceLock::new();
        LIST.get_or_init(|| PatternList::from_lines(PATTERNS).expect("bundled patterns compile"))
    }

    /// Strips matching prefixes repeatedly until the text stabilizes.
    fn strip_leading(&self, text: &str) -> String {
        let mut current = text.trim_start().to_string();
        for _ in 0..16 {
            let mut changed = false;
            for re in &self.patterns {
                if let Some(m) = re.find(&current) {
                    if m.start() == 0 && m.end() > 0 {
                        current = current[m.end()..].trim_start().to_string();
                        changed = true;
                    }
                }
            }
            if !changed {
                break;
            }
        }
        current
    }
}

fn unwrap_code_fence(text: &str) -> String {
    let trimmed = text.trim();
    if let Some(rest) = trimmed.strip_prefix("```") {
        if let Some(body) = rest.split_once('\n').map(|(_, b)| b) {
            if let Some(inner) = body.strip_suffix("```") {
                return inner.trim().to_string();
            }
        }
    }
    trimmed.to_string()
}

/// Extracts the candidate rewrite from a raw model response.
///
/// Reasoning blocks are removed first. For chain-of-thought prompts, only
/// the section after the final `## Rewritten text` marker is kept and a
/// missing marker is an extraction failure. Leading boilerplate is stripped
/// via the bundled pattern list.
pub fn postprocess(raw_text: &str, strategy: PromptStrategy) -> Result<String, RunError> {
    postprocess_with(raw_text, strategy, PatternList::bundled())
}

pub fn postprocess_with(
    raw_text: &str,
    strategy: PromptStrategy,
    patterns: &PatternList,
) -> Result<String, RunError> {
    let mut text = raw_text.to_string();
    for re in think_block_regexes() {
        text = re.replace_all(&text, "").into_owned();
    }

    if strategy.kind == StrategyKind::ChainOfThought {
        let marker = cot_marker_regex();
        let m = marker
            .find_iter(&text)
            .last()
            .ok_or_else(|| RunError::ExtractionFailure("missing '## Rewritten text' section".into()))?;
        text = text[m.end()..].to_string();
    }

    let text = patterns.strip_leading(text.trim());
    Ok(unwrap_code_fence(&text).trim().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn direct() -> PromptStrategy {
        "direct".parse().unwrap()
    }

    fn cot() -> PromptStrategy {
        "chain_of_thought".parse().unwrap()
    }

    #[test]
    fn strips_think_blocks() {
        assert_eq!(postprocess("<think>plan</think>Hello", direct()).unwrap(), "Hello");
        assert_eq!(
            postprocess("<think>a</think>X<think>b</think>Y", direct()).unwrap(),
            "XY"
        );
    }

    #[test]
    fn unclosed_think_block_drops_tail() {
        assert_eq!(postprocess("Hello<think>never closed", direct()).unwrap(), "Hello");
    }

    #[test]
    fn cot_extracts_rewritten_section() {
        let raw = "## Edits\n- shorten\n- simplify\n\n## Rewritten text\nX";
        assert_eq!(postprocess(raw, cot()).unwrap(), "X");
    }

    #[test]
    fn cot_missing_marker_is_extraction_failure() {
        assert!(matches!(
            postprocess("no sections here", cot()),
            Err(RunError::ExtractionFailure(_))
        ));
    }

    #[test]
    fn cot_marker_absent_for_direct_is_fine() {
        assert_eq!(postprocess("plain text", direct()).unwrap(), "plain text");
    }

    #[test]
    fn strips_bundled_boilerplate() {
        for (raw, want) in [
            ("Sure, here's the rewritten text:\nY", "Y"),
            ("Here is your rewritten text: Y", "Y"),
            ("Certainly! Here's the revised version:\n\nY", "Y"),
            ("Rewritten text: Y", "Y"),
            ("Okay, Y", "Y"),
        ] {
            assert_eq!(postprocess(raw, direct()).unwrap(), want, "raw {raw:?}");
        }
    }

    #[test]
    fn unwraps_code_fences() {
        assert_eq!(postprocess("```\nY\n```", direct()).unwrap(), "Y");
        assert_eq!(postprocess("```text\nY\n```", direct()).unwrap(), "Y");
    }

    #[test]
    fn empty_response_stays_empty() {
        assert_eq!(postprocess("", direct()).unwrap(), "");
        assert_eq!(postprocess("<think>only thoughts</think>", direct()).unwrap(), "");
    }

    #[test]
    fn plain_rewrites_pass_through_unchanged() {
        let text = "The cat sat on the mat. It was a fine day.";
        assert_eq!(postprocess(text, direct()).unwrap(), text);
    }

    #[test]
    fn custom_pattern_file() {
        let list = PatternList::from_lines("^foo:\\s*").unwrap();
        assert_eq!(postprocess_with("foo: bar", direct(), &list).unwrap(), "bar");
    }
}
