//! Drives chat endpoints over a probe: decoding configuration, transport
//! retries, response post-processing, best-of-N selection, and a resumable
//! response journal.

mod endpoint;
mod journal;
mod postprocess;

pub use endpoint::{
    ChatEndpoint, ChatRequest, ChatResponse, EndpointError, FnEndpoint, HttpEndpoint,
    ScriptedEndpoint, ScriptedOutcome, API_KEY_ENV,
};
pub use journal::{load_journal, read_responses, JournalRecord, JournalState, JournalWriter};
pub use postprocess::{postprocess, postprocess_with, PatternList};

use std::collections::HashMap;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::goalspace::{GoalMapper, GoalVector};
use crate::probegen::ProbeItem;
use crate::promptgen::PromptStrategy;
use crate::steermetrics::steering_error;

#[derive(Debug, Error)]
pub enum RunError {
    #[error("transport failure after {retries} retries: {message}")]
    Transport { retries: u32, message: String },
    #[error("credential error: {0}")]
    Credential(String),
    #[error("extraction failure: {0}")]
    ExtractionFailure(String),
    #[error("no valid candidate among attempts")]
    NoValidCandidate,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("format: {0}")]
    Format(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecodingMode {
    Greedy,
    Sampled,
}

/// Decoding settings sent over the wire. Greedy implies temperature 0;
/// sampled defaults to temperature 1, min-p 0.2, frequency penalty 0.1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecodingConfig {
    pub mode: DecodingMode,
    pub temperature: f64,
    pub min_p: Option<f64>,
    pub frequency_penalty: f64,
    pub max_context_tokens: usize,
}

pub const DEFAULT_MAX_CONTEXT_TOKENS: usize = 32_000;

impl DecodingConfig {
    pub fn greedy() -> DecodingConfig {
        DecodingConfig {
            mode: DecodingMode::Greedy,
            temperature: 0.0,
            min_p: None,
            frequency_penalty: 0.0,
            max_context_tokens: DEFAULT_MAX_CONTEXT_TOKENS,
        }
    }

    pub fn sampled() -> DecodingConfig {
        DecodingConfig {
            mode: DecodingMode::Sampled,
            temperature: 1.0,
            min_p: Some(0.2),
            frequency_penalty: 0.1,
            max_context_tokens: DEFAULT_MAX_CONTEXT_TOKENS,
        }
    }

    pub fn validate(&self) -> Result<(), RunError> {
        if self.mode == DecodingMode::Greedy && self.temperature != 0.0 {
            return Err(RunError::InvalidArgument("greedy decoding requires temperature 0".into()));
        }
        Ok(())
    }
}

/// Why a response was rejected before (or during) metric computation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum FilterStatus {
    /// Awaiting groundedness judgment.
    Pending,
    Grounded,
    Rejected { reason: String },
}

/// One model attempt for one probe item.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseRecord {
    pub item_id: String,
    pub attempt_index: usize,
    pub raw_text: String,
    pub rewrite_text: Option<String>,
    /// Present iff the rewrite parsed and all metrics were computable.
    pub z_hat: Option<GoalVector>,
    pub transport_retries: u32,
    pub filter_status: FilterStatus,
    /// Whether this attempt was kept by best-of-N selection (always true
    /// for single-attempt runs that produced a usable rewrite).
    pub selected: bool,
    pub strategy: String,
    pub decoding: DecodingConfig,
    pub min_p_acknowledged: Option<bool>,
}

/// Exponential-backoff retry policy for transport failures.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub base_delay_ms: u64,
    pub max_delay_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy { max_retries: 5, base_delay_ms: 250, max_delay_ms: 8_000 }
    }
}

impl RetryPolicy {
    /// No sleeping between retries; for tests and mock endpoints.
    pub fn immediate() -> RetryPolicy {
        RetryPolicy { max_retries: 5, base_delay_ms: 0, max_delay_ms: 0 }
    }

    fn delay(&self, attempt: u32) -> std::time::Duration {
        let ms = self.base_delay_ms.saturating_mul(1u64 << attempt.min(16));
        std::time::Duration::from_millis(ms.min(self.max_delay_ms))
    }
}

/// One logical model call: exactly one completion per request, with
/// transport failures retried up to the policy cap. Non-transport responses
/// are never re-sent.
pub fn complete(
    endpoint: &dyn ChatEndpoint,
    request: &ChatRequest,
    retry: &RetryPolicy,
) -> Result<(ChatResponse, u32), RunError> {
    let mut retries = 0u32;
    loop {
        match endpoint.complete(request) {
            Ok(resp) => return Ok((resp, retries)),
            Err(EndpointError::Credential(m)) => return Err(RunError::Credential(m)),
            Err(EndpointError::Transport { message, .. }) => {
                if retries >= retry.max_retries {
                    return Err(RunError::Transport { retries, message });
                }
                std::thread::sleep(retry.delay(retries));
                retries += 1;
            }
        }
    }
}

/// Settings for a probe run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub model: String,
    pub decoding: DecodingConfig,
    pub retry: RetryPolicy,
    /// Maximum in-flight requests.
    pub parallelism: usize,
    /// Attempts per item; the lowest-steering-error attempt is selected.
    pub best_of: usize,
}

impl RunConfig {
    pub fn greedy(model: &str) -> RunConfig {
        RunConfig {
            model: model.into(),
            decoding: DecodingConfig::greedy(),
            retry: RetryPolicy::default(),
            parallelism: 1,
            best_of: 1,
        }
    }
}

/// Mock-harness goal mapper: decodes vectors embedded in scripted responses
/// (`GOALVEC: 0.1 0.2 ...`). Text without an encoding maps to `fallback`
/// when set, otherwise fails like an unmappable rewrite would.
pub struct VecCodeMapper {
    pub dim: usize,
    pub fallback: Option<GoalVector>,
}

pub const GOALVEC_PREFIX: &str = "GOALVEC:";

impl VecCodeMapper {
    pub fn new(dim: usize) -> VecCodeMapper {
        VecCodeMapper { dim, fallback: None }
    }

    pub fn with_fallback(mut self, fallback: GoalVector) -> VecCodeMapper {
        self.fallback = Some(fallback);
        self
    }

    /// Renders a vector into the encoding this mapper decodes.
    pub fn encode(z: &GoalVector) -> String {
        let parts: Vec<String> = z.as_slice().iter().map(|v| format!("{v}")).collect();
        format!("{GOALVEC_PREFIX} {}", parts.join(" "))
    }
}

impl GoalMapper for VecCodeMapper {
    fn map_text(&self, text: &str) -> Result<GoalVector, crate::goalspace::GoalSpaceError> {
        if let Some(rest) = text.trim().strip_prefix(GOALVEC_PREFIX) {
            let values: Result<Vec<f64>, _> =
                rest.split_whitespace().map(str::parse::<f64>).collect();
            if let Ok(values) = values {
                if values.len() == self.dim {
                    return Ok(GoalVector(values));
                }
            }
            return Err(crate::goalspace::GoalSpaceError::Config(format!(
                "bad goal-vector encoding: {text:?}"
            )));
        }
        match &self.fallback {
            Some(f) => Ok(f.clone()),
            None => Err(crate::goalspace::GoalSpaceError::Config("no goal-vector encoding".into())),
        }
    }

    fn dim(&self) -> usize {
        self.dim
    }
}

/// Index of the lowest score among present candidates; ties keep the
/// earliest index. `None` when no candidate is scoreable.
pub fn select_best_scores(scores: &[Option<f64>]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, s) in scores.iter().enumerate() {
        if let Some(s) = s {
            if best.is_none_or(|(_, b)| *s < b) {
                best = Some((i, *s));
            }
        }
    }
    best.map(|(i, _)| i)
}

fn full_user_content(item: &ProbeItem) -> String {
    format!("{}\n\n{}", item.prompt.text, item.source_text)
}

fn attempt_record(
    item: &ProbeItem,
    attempt_index: usize,
    cfg: &RunConfig,
    strategy: PromptStrategy,
    mapper: &dyn GoalMapper,
    response: ChatResponse,
    transport_retries: u32,
) -> ResponseRecord {
    let mut record = ResponseRecord {
        item_id: item.id.clone(),
        attempt_index,
        raw_text: response.text.clone(),
        rewrite_text: None,
        z_hat: None,
        transport_retries,
        filter_status: FilterStatus::Pending,
        selected: false,
        strategy: item.strategy.clone(),
        decoding: cfg.decoding,
        min_p_acknowledged: response.min_p_acknowledged,
    };
    match postprocess(&response.text, strategy) {
        Ok(rewrite) => match mapper.map_text(&rewrite) {
            Ok(z_hat) => {
                record.rewrite_text = Some(rewrite);
                record.z_hat = Some(z_hat);
            }
            Err(e) => {
                record.rewrite_text = Some(rewrite);
                record.filter_status = FilterStatus::Rejected { reason: format!("unmappable: {e}") };
            }
        },
        Err(e) => {
            record.filter_status = FilterStatus::Rejected { reason: e.to_string() };
        }
    }
    record
}

fn failure_record(item: &ProbeItem, attempt_index: usize, cfg: &RunConfig, err: &RunError) -> ResponseRecord {
    let retries = match err {
        RunError::Transport { retries, .. } => *retries,
        _ => 0,
    };
    ResponseRecord {
        item_id: item.id.clone(),
        attempt_index,
        raw_text: String::new(),
        rewrite_text: None,
        z_hat: None,
        transport_retries: retries,
        filter_status: FilterStatus::Rejected { reason: err.to_string() },
        selected: false,
        strategy: item.strategy.clone(),
        decoding: cfg.decoding,
        min_p_acknowledged: None,
    }
}

/// Runs all attempts for one item and marks the selected record. Transport
/// exhaustion yields a rejected record; credential errors abort the run.
fn run_item(
    item: &ProbeItem,
    endpoint: &dyn ChatEndpoint,
    mapper: &dyn GoalMapper,
    cfg: &RunConfig,
) -> Result<Vec<ResponseRecord>, RunError> {
    let strategy: PromptStrategy = item
        .strategy
        .parse()
        .map_err(|e| RunError::InvalidArgument(format!("item {}: {e}", item.id)))?;
    let request = ChatRequest {
        model: cfg.model.clone(),
        user_content: full_user_content(item),
        decoding: cfg.decoding,
    };
    let n = cfg.best_of.max(1);
    let mut records = Vec::with_capacity(n);
    for attempt in 0..n {
        match complete(endpoint, &request, &cfg.retry) {
            Ok((response, retries)) => {
                records.push(attempt_record(item, attempt, cfg, strategy, mapper, response, retries));
            }
            Err(e @ RunError::Credential(_)) => return Err(e),
            Err(e) => {
                records.push(failure_record(item, attempt, cfg, &e));
            }
        }
    }
    let scores: Vec<Option<f64>> = records
        .iter()
        .map(|r| r.z_hat.as_ref().and_then(|z| steering_error(&item.z_star, z).ok()))
        .collect();
    if let Some(best) = select_best_scores(&scores) {
        records[best].selected = true;
    }
    Ok(records)
}

/// Samples `n` completions for one item and returns the one with the lowest
/// score (steering error against the item's target by default), along with
/// all attempt records. Ties break toward the lowest attempt index.
pub fn best_of_n(
    item: &ProbeItem,
    endpoint: &dyn ChatEndpoint,
    mapper: &dyn GoalMapper,
    n: usize,
    decoding: DecodingConfig,
    retry: RetryPolicy,
    scorer: Option<&dyn Fn(&GoalVector) -> f64>,
) -> Result<(ResponseRecord, Vec<ResponseRecord>), RunError> {
    if n == 0 {
        return Err(RunError::InvalidArgument("best_of_n needs n >= 1".into()));
    }
    decoding.validate()?;
    let cfg = RunConfig {
        model: "best-of-n".into(),
        decoding,
        retry,
        parallelism: 1,
        best_of: n,
    };
    let mut records = run_item(item, endpoint, mapper, &cfg)?;
    let scores: Vec<Option<f64>> = records
        .iter()
        .map(|r| {
            r.z_hat.as_ref().map(|z| match scorer {
                Some(f) => f(z),
                None => steering_error(&item.z_star, z).unwrap_or(f64::INFINITY),
            })
        })
        .collect();
    for r in records.iter_mut() {
        r.selected = false;
    }
    let best = select_best_scores(&scores).ok_or(RunError::NoValidCandidate)?;
    records[best].selected = true;
    Ok((records[best].clone(), records))
}

/// Drives the endpoint over every probe item with bounded parallelism,
/// journaling each finished item. Items already completed in the journal are
/// not re-sent. Returns every record for the probe in item order.
pub fn run_probe(
    items: &[ProbeItem],
    endpoint: &dyn ChatEndpoint,
    mapper: &dyn GoalMapper,
    cfg: &RunConfig,
    journal_path: &Path,
) -> Result<Vec<ResponseRecord>, RunError> {
    cfg.decoding.validate()?;
    let state = load_journal(journal_path)?;
    let pending: Vec<&ProbeItem> =
        items.iter().filter(|i| !state.completed.contains(&i.id)).collect();

    if !pending.is_empty() {
        let mut writer = JournalWriter::append_to(journal_path)?;
        let cursor = AtomicUsize::new(0);
        let (tx, rx) = mpsc::channel::<(usize, Result<Vec<ResponseRecord>, RunError>)>();
        let workers = cfg.parallelism.max(1).min(pending.len());

        let write_result: Result<(), RunError> = std::thread::scope(|scope| {
            for _ in 0..workers {
                let tx = tx.clone();
                let cursor = &cursor;
                let pending = &pending;
                scope.spawn(move || loop {
                    let i = cursor.fetch_add(1, Ordering::SeqCst);
                    if i >= pending.len() {
                        break;
                    }
                    let result = run_item(pending[i], endpoint, mapper, cfg);
                    if tx.send((i, result)).is_err() {
                        break;
                    }
                });
            }
            drop(tx);

            // Single serialized writer; buffers out-of-order completions so
            // the journal stays in probe order.
            let mut buffered: HashMap<usize, Vec<ResponseRecord>> = HashMap::new();
            let mut next = 0usize;
            for (i, result) in rx {
                buffered.insert(i, result?);
                while let Some(records) = buffered.remove(&next) {
                    writer.write_item(&pending[next].id, &records)?;
                    next += 1;
                }
            }
            Ok(())
        });
        write_result?;
    }

    // Reload and order by probe position for a deterministic record set.
    let final_state = load_journal(journal_path)?;
    let mut by_item: HashMap<String, Vec<ResponseRecord>> = HashMap::new();
    for r in final_state.records {
        by_item.entry(r.item_id.clone()).or_default().push(r);
    }
    let mut out = Vec::new();
    for item in items {
        if let Some(mut records) = by_item.remove(&item.id) {
            records.sort_by_key(|r| r.attempt_index);
            out.extend(records);
        }
    }
    Ok(out)
}
