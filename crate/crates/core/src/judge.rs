//! LLM-as-judge groundedness filtering with human-in-the-loop review, plus
//! the goal-dimension validity judge used for rank-agreement checks.

use std::collections::{HashMap, HashSet};
use std::io::{BufRead, Write};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::llmrun::{
    complete, ChatEndpoint, ChatRequest, DecodingConfig, FilterStatus, ResponseRecord, RetryPolicy,
};

/// Number of random "Yes" verdicts flagged for review alongside every
/// "No"/"None" verdict.
pub const YES_REVIEW_SAMPLE: usize = 16;

#[derive(Debug, Error)]
pub enum JudgeError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("format: {0}")]
    Format(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Answer {
    Yes,
    No,
    /// Parse failure.
    None,
}

/// A parsed groundedness verdict.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JudgeVerdict {
    pub answer: Answer,
    pub rationale: String,
    pub order_flipped: bool,
}

/// One line of the judgments file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JudgmentRecord {
    pub record_id: String,
    pub answer: Answer,
    pub rationale: String,
    pub order_flipped: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HumanAction {
    Approve,
    Overrule,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FinalStatus {
    Grounded,
    Rejected,
}

/// One line of the decisions file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReviewDecision {
    pub record_id: String,
    /// Absent for verdicts finalized without review (unflagged "Yes").
    pub human_override: Option<HumanAction>,
    #[serde(rename = "final")]
    pub final_status: FinalStatus,
}

const GROUNDEDNESS_TEMPLATE: &str = "You are an impartial judge comparing two texts. Your task is \
to determine whether these two texts could possibly be describing the same event or story, or \
otherwise be variations of the same text. The two texts may vary drastically in tone, formality, \
verbosity, length, or other aspects of style and wording, and can be drawn from a variety of \
sources, including but not limited to news articles, creative writing, social media, and others. \
However, the texts should very broadly discuss the same topics and/or events.\n\n\
**Version A:**\n$version_a\n\n\
**Version B:**\n$version_b\n\n\
Answer yes or no and provide a brief rationale (1-2 sentences). Return only a valid JSON object \
in the following format, with no additional commentary.\n\
```\n{\n    \"answer\": [Yes|No],\n    \"rationale\": [your reasoning],\n}\n```";

const DIMENSION_TEMPLATE: &str = "You are an impartial judge comparing two versions of a \
particular text.\n\n\
**Version A:**\n$version_a\n\n\
**Version B:**\n$version_b\n\n\
Please evaluate the two versions by answering the following questions.\n\n\
**Questions:**\n\n\
* Which version is harder to read?\n\n\
* Which version uses more diverse language?\n\n\
* Which version is more verbose?\n\n\
* Which version is more formal?\n\n\
For all questions, you may answer \"A\", \"B\", or \"Tie,\" and provide a brief rationale (1-2 \
sentences). Return only a valid JSON object in the following format, with no additional \
commentary.\n\
```\n{\n    \"higher_reading_difficulty\": {\"answer\": [A|B|Tie], \"rationale\": [your reasoning]},\n    \
\"higher_textual_diversity\": {\"answer\": [A|B|Tie], \"rationale\": [your reasoning]},\n    \
\"higher_text_length\": {\"answer\": [A|B|Tie], \"rationale\": [your reasoning]},\n    \
\"higher_formality\": {\"answer\": [A|B|Tie], \"rationale\": [your reasoning]},\n}\n```";

fn fill_template<R: Rng>(template: &str, original: &str, rewrite: &str, rng: &mut R) -> (String, bool) {
    let order_flipped: bool = rng.gen();
    let (a, b) = if order_flipped { (rewrite, original) } else { (original, rewrite) };
    let text = template.replace("$version_a", a).replace("$version_b", b);
    (text, order_flipped)
}

/// Renders the groundedness prompt with randomized A/B order. Returns the
/// prompt and whether the rewrite was shown first.
pub fn render_groundedness_prompt<R: Rng>(
    original: &str,
    rewrite: &str,
    rng: &mut R,
) -> (String, bool) {
    fill_template(GROUNDEDNESS_TEMPLATE, original, rewrite, rng)
}

/// Renders the four-question goal-dimension validity prompt with randomized
/// A/B order.
pub fn render_dimension_judge_prompt<R: Rng>(
    original: &str,
    rewrite: &str,
    rng: &mut R,
) -> (String, bool) {
    fill_template(DIMENSION_TEMPLATE, original, rewrite, rng)
}

/// Extracts balanced `{...}` candidates from arbitrary judge output,
/// tolerating code fences, surrounding prose, and trailing commas.
fn json_candidates(text: &str) -> Vec<String> {
    let bytes: Vec<char> = text.chars().collect();
    let mut candidates = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == '{' {
            let mut depth = 0usize;
            let mut in_string = false;
            let mut escaped = false;
            for (j, &c) in bytes.iter().enumerate().skip(i) {
                if in_string {
                    if escaped {
                        escaped = false;
                    } else if c == '\\' {
                        escaped = true;
                    } else if c == '"' {
                        in_string = false;
                    }
                    continue;
                }
                match c {
                    '"' => in_string = true,
                    '{' => depth += 1,
                    '}' => {
                        depth -= 1;
                        if depth == 0 {
                            candidates.push(bytes[i..=j].iter().collect());
                            i = j;
                            break;
                        }
                    }
                    _ => {}
                }
            }
        }
        i += 1;
    }
    candidates
}

fn clean_trailing_commas(json: &str) -> String {
    static RE: std::sync::OnceLock<regex::Regex> = std::sync::OnceLock::new();
    let re = RE.get_or_init(|| regex::Regex::new(r",\s*([}\]])").unwrap());
    re.replace_all(json, "$1").into_owned()
}

fn parse_value(text: &str) -> Option<serde_json::Value> {
    for candidate in json_candidates(text) {
        if let Ok(v) = serde_json::from_str::<serde_json::Value>(&clean_trailing_commas(&candidate)) {
            return Some(v);
        }
    }
    None
}

fn value_to_string(v: &serde_json::Value) -> String {
    match v {
        serde_json::Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

/// Parses a groundedness response into a verdict. Unparseable output maps
/// to `Answer::None` rather than an error.
pub fn parse_judge_response(text: &str) -> JudgeVerdict {
    let parsed = parse_value(text).and_then(|v| {
        let answer = v.get("answer")?;
        let answer = match value_to_string(answer).trim().to_lowercase().as_str() {
            "yes" => Answer::Yes,
            "no" => Answer::No,
            _ => return None,
        };
        let rationale = v.get("rationale").map(value_to_string).unwrap_or_default();
        Some((answer, rationale))
    });
    match parsed {
        Some((answer, rationale)) => JudgeVerdict { answer, rationale, order_flipped: false },
        None => JudgeVerdict { answer: Answer::None, rationale: String::new(), order_flipped: false },
    }
}

/// Answer to one dimension question, canonically de-flipped so that `A`
/// always refers to the original text and `B` to the rewrite.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Comparison {
    A,
    B,
    Tie,
}

impl Comparison {
    fn flip(self) -> Comparison {
        match self {
            Comparison::A => Comparison::B,
            Comparison::B => Comparison::A,
            Comparison::Tie => Comparison::Tie,
        }
    }

    /// Sign of the judged change on this dimension: +1 if the rewrite is
    /// higher, -1 if the original is higher, 0 on a tie.
    pub fn to_sign(self) -> f64 {
        match self {
            Comparison::A => -1.0,
            Comparison::B => 1.0,
            Comparison::Tie => 0.0,
        }
    }
}

pub const DIMENSION_JUDGE_KEYS: [&str; 4] = [
    "higher_reading_difficulty",
    "higher_textual_diversity",
    "higher_text_length",
    "higher_formality",
];

/// Per-dimension validity judgments; `None` marks an unparseable answer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DimensionJudgments {
    pub answers: [Option<Comparison>; 4],
    pub rationales: [Option<String>; 4],
}

/// Parses the four-question judge response. Missing or malformed keys yield
/// `None` for that dimension only.
pub fn parse_dimension_judgments(text: &str) -> DimensionJudgments {
    let mut answers = [None, None, None, None];
    let mut rationales = [None, None, None, None];
    if let Some(v) = parse_value(text) {
        for (i, key) in DIMENSION_JUDGE_KEYS.iter().enumerate() {
            let Some(entry) = v.get(key) else { continue };
            let answer = entry.get("answer").map(value_to_string).unwrap_or_default();
            answers[i] = match answer.trim().trim_matches('"').to_lowercase().as_str() {
                "a" => Some(Comparison::A),
                "b" => Some(Comparison::B),
                "tie" => Some(Comparison::Tie),
                _ => None,
            };
            rationales[i] = entry.get("rationale").map(value_to_string);
        }
    }
    DimensionJudgments { answers, rationales }
}

impl DimensionJudgments {
    /// Restores canonical orientation (A = original) for prompts that showed
    /// the rewrite first.
    pub fn de_flip(mut self, order_flipped: bool) -> DimensionJudgments {
        if order_flipped {
            for a in self.answers.iter_mut() {
                *a = a.map(Comparison::flip);
            }
        }
        self
    }
}

/// Builds the review queue: every No/None verdict plus a seeded-random
/// sample of 16 Yes verdicts (all of them when fewer exist). Queue order is
/// input order, flagged verdicts first.
pub fn build_review_queue<R: Rng>(judgments: &[JudgmentRecord], rng: &mut R) -> Vec<String> {
    let mut queue: Vec<String> = judgments
        .iter()
        .filter(|j| j.answer != Answer::Yes)
        .map(|j| j.record_id.clone())
        .collect();
    let yes_indices: Vec<usize> = (0..judgments.len())
        .filter(|&i| judgments[i].answer == Answer::Yes)
        .collect();
    let mut sampled: Vec<usize> = if yes_indices.len() <= YES_REVIEW_SAMPLE {
        yes_indices
    } else {
        rand::seq::index::sample(rng, yes_indices.len(), YES_REVIEW_SAMPLE)
            .into_iter()
            .map(|k| yes_indices[k])
            .collect()
    };
    sampled.sort_unstable();
    queue.extend(sampled.into_iter().map(|i| judgments[i].record_id.clone()));
    queue
}

/// Review semantics: approving upholds the verdict, overruling flips it.
pub fn decide(answer: Answer, action: HumanAction) -> FinalStatus {
    match (answer, action) {
        (Answer::Yes, HumanAction::Approve) => FinalStatus::Grounded,
        (Answer::Yes, HumanAction::Overrule) => FinalStatus::Rejected,
        (_, HumanAction::Approve) => FinalStatus::Rejected,
        (_, HumanAction::Overrule) => FinalStatus::Grounded,
    }
}

/// One queue entry with everything the dialog displays.
#[derive(Debug, Clone)]
pub struct ReviewItem {
    pub record_id: String,
    pub original: String,
    pub rewrite: String,
    pub answer: Answer,
    pub rationale: String,
}

/// Runs the review dialog over `queue`, reading approve/overrule commands
/// from `input` and writing the transcript to `output`. The same function
/// serves the interactive terminal and scripted replay, so both produce
/// byte-identical transcripts and decisions.
///
/// `persist` is called after each decision; an aborted session keeps every
/// decision already persisted. Items in `already_decided` are skipped.
pub fn run_review<R: BufRead, W: Write>(
    queue: &[ReviewItem],
    already_decided: &HashSet<String>,
    input: &mut R,
    output: &mut W,
    mut persist: impl FnMut(&ReviewDecision) -> Result<(), JudgeError>,
) -> Result<Vec<ReviewDecision>, JudgeError> {
    let mut decisions = Vec::new();
    for item in queue {
        if already_decided.contains(&item.record_id) {
            continue;
        }
        writeln!(output, "=== record {} ===", item.record_id)?;
        writeln!(output, "--- original ---")?;
        writeln!(output, "{}", item.original)?;
        writeln!(output, "--- rewrite ---")?;
        writeln!(output, "{}", item.rewrite)?;
        writeln!(output, "--- judge ---")?;
        writeln!(output, "answer: {:?}", item.answer)?;
        writeln!(output, "rationale: {}", item.rationale)?;
        let action = loop {
            writeln!(output, "[a]pprove verdict / [o]verrule verdict / [q]uit:")?;
            output.flush()?;
            let mut line = String::new();
            if input.read_line(&mut line)? == 0 {
                return Ok(decisions); // EOF: preserve partial decisions
            }
            match line.trim().to_lowercase().as_str() {
                "a" | "approve" => break Some(HumanAction::Approve),
                "o" | "overrule" => break Some(HumanAction::Overrule),
                "q" | "quit" => break None,
                other => writeln!(output, "unrecognized input {other:?}")?,
            }
        };
        let Some(action) = action else {
            return Ok(decisions);
        };
        let decision = ReviewDecision {
            record_id: item.record_id.clone(),
            human_override: Some(action),
            final_status: decide(item.answer, action),
        };
        persist(&decision)?;
        decisions.push(decision);
    }
    Ok(decisions)
}

/// Combines reviewed queue decisions with automatic decisions for
/// unflagged "Yes" verdicts, producing one final status per judged record
/// that completed review.
pub fn finalize_decisions(
    judgments: &[JudgmentRecord],
    queue: &[String],
    reviewed: &[ReviewDecision],
) -> Vec<ReviewDecision> {
    let queued: HashSet<&str> = queue.iter().map(String::as_str).collect();
    let reviewed_by_id: HashMap<&str, &ReviewDecision> =
        reviewed.iter().map(|d| (d.record_id.as_str(), d)).collect();
    let mut out = Vec::new();
    for j in judgments {
        if queued.contains(j.record_id.as_str()) {
            if let Some(d) = reviewed_by_id.get(j.record_id.as_str()) {
                out.push((*d).clone());
            }
            // Unreviewed queue items (aborted session) get no decision.
        } else {
            out.push(ReviewDecision {
                record_id: j.record_id.clone(),
                human_override: None,
                final_status: FinalStatus::Grounded,
            });
        }
    }
    out
}

/// Record ids with a grounded final status.
pub fn grounded_ids(decisions: &[ReviewDecision]) -> HashSet<String> {
    decisions
        .iter()
        .filter(|d| d.final_status == FinalStatus::Grounded)
        .map(|d| d.record_id.clone())
        .collect()
}

/// Applies final statuses onto response records (by record id).
pub fn apply_decisions(records: &mut [ResponseRecord], decisions: &[ReviewDecision]) {
    let by_id: HashMap<&str, FinalStatus> =
        decisions.iter().map(|d| (d.record_id.as_str(), d.final_status)).collect();
    for r in records.iter_mut() {
        if let Some(status) = by_id.get(record_id(r).as_str()) {
            r.filter_status = match status {
                FinalStatus::Grounded => FilterStatus::Grounded,
                FinalStatus::Rejected => {
                    FilterStatus::Rejected { reason: "groundedness review".into() }
                }
            };
        }
    }
}

/// Stable identifier for one response record.
pub fn record_id(record: &ResponseRecord) -> String {
    format!("{}@{}", record.item_id, record.attempt_index)
}

/// Judges groundedness for `(record_id, original, rewrite)` triples against
/// a chat endpoint, with bounded parallelism.
pub fn judge_groundedness(
    inputs: &[(String, String, String)],
    endpoint: &dyn ChatEndpoint,
    model: &str,
    retry: &RetryPolicy,
    parallelism: usize,
    seed: u64,
) -> Result<Vec<JudgmentRecord>, JudgeError> {
    use rand::SeedableRng;
    let pending: Vec<(usize, &(String, String, String))> = inputs.iter().enumerate().collect();
    let cursor = std::sync::atomic::AtomicUsize::new(0);
    let results: std::sync::Mutex<Vec<Option<JudgmentRecord>>> =
        std::sync::Mutex::new(vec![None; inputs.len()]);

    std::thread::scope(|scope| {
        for _ in 0..parallelism.max(1).min(pending.len().max(1)) {
            let cursor = &cursor;
            let results = &results;
            let pending = &pending;
            scope.spawn(move || loop {
                let i = cursor.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
                if i >= pending.len() {
                    break;
                }
                let (idx, (record_id, original, rewrite)) = pending[i];
                // Per-record rng stream keyed by position for determinism
                // under any parallelism.
                let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed.wrapping_add(idx as u64));
                let (prompt, order_flipped) = render_groundedness_prompt(original, rewrite, &mut rng);
                let request = ChatRequest {
                    model: model.to_string(),
                    user_content: prompt,
                    decoding: DecodingConfig::greedy(),
                };
                let verdict = match complete(endpoint, &request, retry) {
                    Ok((resp, _)) => parse_judge_response(&resp.text),
                    Err(_) => JudgeVerdict {
                        answer: Answer::None,
                        rationale: "judge call failed".into(),
                        order_flipped: false,
                    },
                };
                let record = JudgmentRecord {
                    record_id: record_id.clone(),
                    answer: verdict.answer,
                    rationale: verdict.rationale,
                    order_flipped,
                };
                results.lock().unwrap()[idx] = Some(record);
            });
        }
    });

    Ok(results.into_inner().unwrap().into_iter().map(|r| r.expect("all records judged")).collect())
}

pub fn write_jsonl<T: Serialize, W: Write>(mut writer: W, rows: &[T]) -> Result<(), JudgeError> {
    for row in rows {
        let line = serde_json::to_string(row).map_err(|e| JudgeError::Format(e.to_string()))?;
        writeln!(writer, "{line}")?;
    }
    Ok(())
}

pub fn read_jsonl<T: for<'de> Deserialize<'de>, R: BufRead>(reader: R) -> Result<Vec<T>, JudgeError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line)
                .map_err(|e| JudgeError::Format(format!("line {}: {e}", i + 1)))?,
        );
    }
    Ok(out)
}
