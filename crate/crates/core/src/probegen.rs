//! Seed-corpus ingestion, density-ratio sampling weights, and generation of
//! goal-uniform probe items.
//!
//! Seeds are reweighted by `(1 - p) / p` where `p` is a logistic
//! classifier's probability that a goal vector came from the seed corpus
//! rather than a uniform draw, so that weighted resampling targets a
//! uniform goal distribution.

use std::io::{BufRead, Write};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::goalspace::{GoalSpaceConfig, GoalSpaceError, GoalVector, GOALSPACE_SCHEMA_VERSION};
use crate::promptgen::{render_prompt, PromptError, PromptStrategy, RenderInputs, RenderedPrompt};
use crate::textmetrics::tokenize;

/// Inclusive word-count bounds for seed texts. The floor matches the
/// lexical-diversity validity floor; the cap bounds generation cost.
pub const MIN_SEED_WORDS: usize = 50;
pub const MAX_SEED_WORDS: usize = 2048;

/// Offset magnitude bounds for sampled goal deltas.
pub const MIN_DELTA: f64 = 0.1;
pub const MAX_DELTA: f64 = 0.7;

#[derive(Debug, Error)]
pub enum ProbeGenError {
    #[error(transparent)]
    GoalSpace(#[from] GoalSpaceError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error("insufficient seeds: requested {requested}, usable {usable}")]
    InsufficientSeeds { requested: usize, usable: usize },
    #[error("classifier did not converge after {iterations} iterations (last losses: {loss_trace:?})")]
    NonConvergence { iterations: usize, loss_trace: Vec<f64> },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("format: {0}")]
    Format(String),
}

/// One raw corpus record, `{"id": ..., "source": ..., "text": ...}` in JSONL.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusRecord {
    pub id: String,
    pub source: String,
    pub text: String,
}

/// A seed text that survived filtering, with its goal-space mapping.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedText {
    pub id: String,
    pub source_tag: String,
    pub text: String,
    pub z0: GoalVector,
    /// Raw metric values, one per goal dimension.
    pub raw: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum RejectReason {
    BelowFloor { words: usize },
    AboveCap { words: usize },
    Malformed { error: String },
    Metric { dimension: String, error: String },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RejectedRecord {
    pub id: Option<String>,
    pub reason: RejectReason,
}

/// Outcome of corpus ingestion: surviving seeds plus per-record rejections.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IngestReport {
    pub seeds: Vec<SeedText>,
    pub rejected: Vec<RejectedRecord>,
}

impl IngestReport {
    pub fn rejection_counts(&self) -> std::collections::BTreeMap<&'static str, usize> {
        let mut counts = std::collections::BTreeMap::new();
        for r in &self.rejected {
            let key = match r.reason {
                RejectReason::BelowFloor { .. } => "below_floor",
                RejectReason::AboveCap { .. } => "above_cap",
                RejectReason::Malformed { .. } => "malformed",
                RejectReason::Metric { .. } => "metric",
            };
            *counts.entry(key).or_insert(0) += 1;
        }
        counts
    }
}

/// Parses a JSONL corpus; malformed lines surface as per-record errors.
pub fn read_corpus_jsonl<R: BufRead>(reader: R) -> Vec<Result<CorpusRecord, String>> {
    reader
        .lines()
        .enumerate()
        .filter_map(|(i, line)| match line {
            Ok(l) if l.trim().is_empty() => None,
            Ok(l) => Some(serde_json::from_str(&l).map_err(|e| format!("line {}: {e}", i + 1))),
            Err(e) => Some(Err(format!("line {}: {e}", i + 1))),
        })
        .collect()
}

/// Applies the word-count filter and computes goal-space mappings. Every
/// failure is a per-record rejection; ingestion never aborts as a whole.
pub fn ingest_corpus<I>(records: I, config: &GoalSpaceConfig) -> IngestReport
where
    I: IntoIterator<Item = Result<CorpusRecord, String>>,
{
    let mut seeds = Vec::new();
    let mut rejected = Vec::new();
    for record in records {
        let record = match record {
            Ok(r) => r,
            Err(error) => {
                rejected.push(RejectedRecord { id: None, reason: RejectReason::Malformed { error } });
                continue;
            }
        };
        let tokens = tokenize(&record.text);
        let words = tokens.word_count();
        if words < MIN_SEED_WORDS {
            rejected.push(RejectedRecord {
                id: Some(record.id),
                reason: RejectReason::BelowFloor { words },
            });
            continue;
        }
        if words > MAX_SEED_WORDS {
            rejected.push(RejectedRecord {
                id: Some(record.id),
                reason: RejectReason::AboveCap { words },
            });
            continue;
        }
        match config.raw_mappings_tokens(&tokens) {
            Ok(raw) => {
                let z0 = GoalVector(
                    raw.iter().enumerate().map(|(i, &r)| config.normalize_index(i, r)).collect(),
                );
                seeds.push(SeedText {
                    id: record.id,
                    source_tag: record.source,
                    text: record.text,
                    z0,
                    raw,
                });
            }
            Err(GoalSpaceError::Metric { dimension, source }) => {
                rejected.push(RejectedRecord {
                    id: Some(record.id),
                    reason: RejectReason::Metric { dimension, error: source.to_string() },
                });
            }
            Err(other) => {
                rejected.push(RejectedRecord {
                    id: Some(record.id),
                    reason: RejectReason::Malformed { error: other.to_string() },
                });
            }
        }
    }
    IngestReport { seeds, rejected }
}

/// L2-regularized logistic regression trained by batch gradient descent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    pub coefficients: Vec<f64>,
    pub intercept: f64,
    pub l2: f64,
    pub iterations: usize,
}

/// Fixed optimizer settings: gradient-norm tolerance and L2 strength.
pub const LOGISTIC_TOLERANCE: f64 = 1e-6;
pub const LOGISTIC_L2: f64 = 1e-4;
const LOGISTIC_MAX_ITER: usize = 200_000;

impl LogisticModel {
    pub fn fit(features: &[Vec<f64>], labels: &[bool]) -> Result<LogisticModel, ProbeGenError> {
        Self::fit_with(features, labels, LOGISTIC_L2, LOGISTIC_TOLERANCE, LOGISTIC_MAX_ITER)
    }

    pub fn fit_with(
        features: &[Vec<f64>],
        labels: &[bool],
        l2: f64,
        tol: f64,
        max_iter: usize,
    ) -> Result<LogisticModel, ProbeGenError> {
        let n = features.len();
        if n == 0 || n != labels.len() {
            return Err(ProbeGenError::InvalidArgument("empty or mismatched training data".into()));
        }
        let dim = features[0].len();
        if features.iter().any(|f| f.len() != dim) {
            return Err(ProbeGenError::InvalidArgument("ragged feature rows".into()));
        }

        let mut w = vec![0.0; dim];
        let mut b = 0.0;
        let mut lr: f64 = 1.0;
        let mut loss_trace = Vec::new();
        let mut prev_loss = f64::INFINITY;

        let eval = |w: &[f64], b: f64| -> (f64, Vec<f64>, f64) {
            let mut grad_w = vec![0.0; dim];
            let mut grad_b = 0.0;
            let mut loss = 0.0;
            for (x, &label) in features.iter().zip(labels) {
                let logit: f64 = b + x.iter().zip(w).map(|(xi, wi)| xi * wi).sum::<f64>();
                let p = 1.0 / (1.0 + (-logit).exp());
                let y = if label { 1.0 } else { 0.0 };
                // Numerically stable cross-entropy.
                loss += logit.max(0.0) - logit * y + (1.0 + (-logit.abs()).exp()).ln();
                let err = p - y;
                for (g, xi) in grad_w.iter_mut().zip(x) {
                    *g += err * xi;
                }
                grad_b += err;
            }
            loss /= n as f64;
            loss += 0.5 * l2 * w.iter().map(|wi| wi * wi).sum::<f64>();
            for (g, wi) in grad_w.iter_mut().zip(w) {
                *g = *g / n as f64 + l2 * wi;
            }
            (loss, grad_w, grad_b / n as f64)
        };

        for iter in 0..max_iter {
            let (loss, grad_w, grad_b) = eval(&w, b);
            if iter % 100 == 0 {
                loss_trace.push(loss);
                if loss_trace.len() > 20 {
                    loss_trace.remove(0);
                }
            }
            let grad_norm =
                (grad_w.iter().map(|g| g * g).sum::<f64>() + grad_b * grad_b).sqrt();
            if grad_norm < tol {
                return Ok(LogisticModel { coefficients: w, intercept: b, l2, iterations: iter });
            }
            if loss > prev_loss {
                lr *= 0.5;
            } else {
                lr = (lr * 1.05).min(64.0);
            }
            prev_loss = loss;
            for (wi, g) in w.iter_mut().zip(&grad_w) {
                *wi -= lr * g;
            }
            b -= lr * grad_b;
        }
        Err(ProbeGenError::NonConvergence { iterations: max_iter, loss_trace })
    }

    pub fn predict_p(&self, x: &[f64]) -> f64 {
        let logit: f64 =
            self.intercept + x.iter().zip(&self.coefficients).map(|(xi, wi)| xi * wi).sum::<f64>();
        1.0 / (1.0 + (-logit).exp())
    }
}

/// Per-seed sampling weights plus the fitted density-ratio classifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingWeights {
    pub weights: Vec<f64>,
    pub classifier: LogisticModel,
}

impl SamplingWeights {
    /// Density-ratio weight `(1 - p) / p` for an arbitrary goal vector.
    pub fn weight_for(&self, z: &GoalVector) -> f64 {
        let p = self.classifier.predict_p(z.as_slice());
        (1.0 - p) / p
    }
}

/// Trains the density-ratio classifier: seeds are class 1, an equal count
/// of uniform goal-space draws is class 0.
pub fn estimate_sampling_weights<R: Rng>(
    seeds: &[SeedText],
    rng: &mut R,
) -> Result<SamplingWeights, ProbeGenError> {
    if seeds.len() < 2 {
        return Err(ProbeGenError::InsufficientSeeds { requested: 2, usable: seeds.len() });
    }
    let dim = seeds[0].z0.dim();
    let mut features: Vec<Vec<f64>> = seeds.iter().map(|s| s.z0.as_slice().to_vec()).collect();
    let mut labels = vec![true; seeds.len()];
    for _ in 0..seeds.len() {
        features.push((0..dim).map(|_| rng.gen::<f64>()).collect());
        labels.push(false);
    }
    let classifier = LogisticModel::fit(&features, &labels)?;
    let weights = seeds
        .iter()
        .map(|s| {
            let p = classifier.predict_p(s.z0.as_slice());
            (1.0 - p) / p
        })
        .collect();
    Ok(SamplingWeights { weights, classifier })
}

/// Weighted sampling without replacement (exponential-keys method):
/// deterministic under a fixed rng and never draws zero-weight entries.
pub fn sample_source_indices<R: Rng>(
    weights: &[f64],
    n: usize,
    rng: &mut R,
) -> Result<Vec<usize>, ProbeGenError> {
    if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
        return Err(ProbeGenError::InvalidArgument("weights must be finite and non-negative".into()));
    }
    let usable = weights.iter().filter(|&&w| w > 0.0).count();
    if n > usable {
        return Err(ProbeGenError::InsufficientSeeds { requested: n, usable });
    }
    let mut keyed: Vec<(f64, usize)> = weights
        .iter()
        .enumerate()
        .filter(|(_, &w)| w > 0.0)
        .map(|(i, &w)| {
            let u: f64 = rng.gen();
            (u.powf(1.0 / w), i)
        })
        .collect();
    keyed.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
    Ok(keyed[..n].iter().map(|&(_, i)| i).collect())
}

/// Weighted without-replacement subsample of seeds.
pub fn sample_sources<'a, R: Rng>(
    seeds: &'a [SeedText],
    weights: &SamplingWeights,
    n: usize,
    rng: &mut R,
) -> Result<Vec<&'a SeedText>, ProbeGenError> {
    if weights.weights.len() != seeds.len() {
        return Err(ProbeGenError::InvalidArgument("weights do not match the seed pool".into()));
    }
    let idx = sample_source_indices(&weights.weights, n, rng)?;
    Ok(idx.into_iter().map(|i| &seeds[i]).collect())
}

/// Samples a feasible goal target: `n_active` dimensions get an offset drawn
/// uniformly from `[-0.7, -0.1] U [0.1, 0.7]` after clipping each side so the
/// target stays in `[0, 1]`; sides with an empty post-clip range are dropped
/// and side choice is proportional to the remaining interval lengths.
/// Inactive components are copied from the source.
pub fn sample_goal<R: Rng>(
    z0: &GoalVector,
    n_active: usize,
    rng: &mut R,
) -> Result<(GoalVector, Vec<bool>, Vec<f64>), ProbeGenError> {
    let dim = z0.dim();
    if n_active == 0 || n_active > dim {
        return Err(ProbeGenError::InvalidArgument(format!(
            "n_active = {n_active} must be within [1, {dim}]"
        )));
    }
    let mut order: Vec<usize> = (0..dim).collect();
    order.shuffle(rng);

    let mut active = vec![false; dim];
    let mut deltas = vec![0.0; dim];
    let mut z_star = z0.as_slice().to_vec();
    let mut chosen = 0;
    for &i in &order {
        if chosen == n_active {
            break;
        }
        match sample_delta(z0[i], rng) {
            Some(delta) => {
                active[i] = true;
                deltas[i] = delta;
                z_star[i] = (z0[i] + delta).clamp(0.0, 1.0);
                chosen += 1;
            }
            // Infeasible on both sides cannot happen for z0 in [0,1]; skip
            // the dimension and try the next one if it ever does.
            None => continue,
        }
    }
    if chosen < n_active {
        return Err(ProbeGenError::InvalidArgument(format!(
            "could not find {n_active} feasible dimensions"
        )));
    }
    Ok((GoalVector(z_star), active, deltas))
}

fn sample_delta<R: Rng>(z0: f64, rng: &mut R) -> Option<f64> {
    let neg_lo = (-MAX_DELTA).max(-z0);
    let neg_len = (-MIN_DELTA - neg_lo).max(0.0);
    let pos_hi = MAX_DELTA.min(1.0 - z0);
    let pos_len = (pos_hi - MIN_DELTA).max(0.0);
    let total = neg_len + pos_len;
    if total <= 0.0 {
        return None;
    }
    let u = rng.gen::<f64>() * total;
    let delta = if u < neg_len { neg_lo + u } else { MIN_DELTA + (u - neg_len) };
    Some(delta)
}

/// Settings for one probe build. `strategy` is a [`PromptStrategy`] id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeSpec {
    pub n_sources: usize,
    pub goals_per_source: usize,
    pub n_active: usize,
    pub strategy: String,
    pub rng_seed: u64,
}

/// One evaluation unit: a source text, its goal mapping, the sampled target,
/// and the rendered instruction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeItem {
    pub id: String,
    pub seed_id: String,
    pub source_text: String,
    pub z0: GoalVector,
    pub z_star: GoalVector,
    pub active: Vec<bool>,
    pub deltas: Vec<f64>,
    pub strategy: String,
    pub rng_seed: u64,
    pub prompt: RenderedPrompt,
}

/// Builds `n_sources x goals_per_source` probe items, fully reproducible
/// from `spec.rng_seed`.
pub fn build_probe(
    seeds: &[SeedText],
    weights: &SamplingWeights,
    config: &GoalSpaceConfig,
    spec: &ProbeSpec,
) -> Result<Vec<ProbeItem>, ProbeGenError> {
    let strategy: PromptStrategy =
        spec.strategy.parse().map_err(|e: PromptError| ProbeGenError::Prompt(e))?;
    let dimension_ids: Vec<String> =
        config.dimensions.iter().map(|d| d.id.clone()).collect();
    let mut master = ChaCha8Rng::seed_from_u64(spec.rng_seed);
    let sources = sample_sources(seeds, weights, spec.n_sources, &mut master)?;

    let mut items = Vec::with_capacity(spec.n_sources * spec.goals_per_source);
    for seed in sources {
        for g in 0..spec.goals_per_source {
            let item_seed: u64 = master.gen();
            let mut item_rng = ChaCha8Rng::seed_from_u64(item_seed);
            let (z_star, active, deltas) = sample_goal(&seed.z0, spec.n_active, &mut item_rng)?;
            let prompt = render_prompt(
                RenderInputs { dimension_ids: &dimension_ids, active: &active, deltas: &deltas },
                strategy,
                &mut item_rng,
            )?;
            items.push(ProbeItem {
                id: format!("{}#{g}", seed.id),
                seed_id: seed.id.clone(),
                source_text: seed.text.clone(),
                z0: seed.z0.clone(),
                z_star,
                active,
                deltas,
                strategy: strategy.id(),
                rng_seed: item_seed,
                prompt,
            });
        }
    }
    Ok(items)
}

/// Probe file records: a header with the goal-space config, then items.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProbeRecord {
    Header { schema_version: u32, goal_space: GoalSpaceConfig, spec: ProbeSpec },
    Item(Box<ProbeItem>),
}

pub fn write_probe<W: Write>(
    mut writer: W,
    config: &GoalSpaceConfig,
    spec: &ProbeSpec,
    items: &[ProbeItem],
) -> Result<(), ProbeGenError> {
    let header = ProbeRecord::Header {
        schema_version: GOALSPACE_SCHEMA_VERSION,
        goal_space: config.clone(),
        spec: spec.clone(),
    };
    writeln!(writer, "{}", serde_json::to_string(&header).map_err(fmt_err)?)?;
    for item in items {
        let record = ProbeRecord::Item(Box::new(item.clone()));
        writeln!(writer, "{}", serde_json::to_string(&record).map_err(fmt_err)?)?;
    }
    Ok(())
}

pub fn read_probe<R: BufRead>(
    reader: R,
) -> Result<(GoalSpaceConfig, ProbeSpec, Vec<ProbeItem>), ProbeGenError> {
    let mut header: Option<(GoalSpaceConfig, ProbeSpec)> = None;
    let mut items = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: ProbeRecord = serde_json::from_str(&line)
            .map_err(|e| ProbeGenError::Format(format!("line {}: {e}", i + 1)))?;
        match record {
            ProbeRecord::Header { schema_version, goal_space, spec } => {
                if schema_version != GOALSPACE_SCHEMA_VERSION {
                    return Err(ProbeGenError::Format(format!(
                        "unsupported probe schema_version {schema_version}"
                    )));
                }
                goal_space.validate()?;
                header = Some((goal_space, spec));
            }
            ProbeRecord::Item(item) => items.push(*item),
        }
    }
    let (config, spec) =
        header.ok_or_else(|| ProbeGenError::Format("probe file has no header record".into()))?;
    Ok((config, spec, items))
}

fn fmt_err(e: serde_json::Error) -> ProbeGenError {
    ProbeGenError::Format(e.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::goalspace::DIM_TEXT_LENGTH;

    fn synthetic_text(words: usize) -> String {
        let vocab = [
            "cat", "dog", "house", "river", "story", "summer", "voice", "market", "garden",
            "bridge", "mountain", "letter", "answer", "moment", "market", "road",
        ];
        let mut out = Vec::with_capacity(words);
        for i in 0..words {
            out.push(vocab[(i * 7 + i / 3) % vocab.len()]);
        }
        format!("{}.", out.join(" "))
    }

    fn record(id: &str, words: usize) -> Result<CorpusRecord, String> {
        Ok(CorpusRecord { id: id.into(), source: "test".into(), text: synthetic_text(words) })
    }

    fn seeds_from_z0(z0s: &[Vec<f64>]) -> Vec<SeedText> {
        z0s.iter()
            .enumerate()
            .map(|(i, z)| SeedText {
                id: format!("s{i}"),
                source_tag: "syn".into(),
                text: String::new(),
                z0: GoalVector(z.clone()),
                raw: z.clone(),
            })
            .collect()
    }

    #[test]
    fn ingest_applies_word_count_filter() {
        let config = GoalSpaceConfig::standard();
        let report = ingest_corpus(
            vec![record("short", 49), record("long", 2049), record("ok", 100)],
            &config,
        );
        assert_eq!(report.seeds.len(), 1);
        assert_eq!(report.seeds[0].id, "ok");
        assert_eq!(report.seeds[0].z0.dim(), 4);
        let counts = report.rejection_counts();
        assert_eq!(counts.get("below_floor"), Some(&1));
        assert_eq!(counts.get("above_cap"), Some(&1));
    }

    #[test]
    fn ingest_isolates_malformed_records() {
        let config = GoalSpaceConfig::standard();
        let report = ingest_corpus(
            vec![Err("line 1: bad json".to_string()), record("ok", 120)],
            &config,
        );
        assert_eq!(report.seeds.len(), 1);
        assert!(matches!(report.rejected[0].reason, RejectReason::Malformed { .. }));
    }

    #[test]
    fn corpus_jsonl_reports_bad_lines() {
        let data = "{\"id\":\"a\",\"source\":\"s\",\"text\":\"hi\"}\nnot json\n";
        let parsed = read_corpus_jsonl(std::io::Cursor::new(data));
        assert_eq!(parsed.len(), 2);
        assert!(parsed[0].is_ok());
        assert!(parsed[1].is_err());
    }

    #[test]
    fn uniform_seeds_get_weights_near_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let z0s: Vec<Vec<f64>> = (0..2000).map(|_| vec![rng.gen(), rng.gen()]).collect();
        let seeds = seeds_from_z0(&z0s);
        let w = estimate_sampling_weights(&seeds, &mut rng).unwrap();
        let mean: f64 = w.weights.iter().sum::<f64>() / w.weights.len() as f64;
        assert!((mean - 1.0).abs() < 0.2, "mean weight {mean}");
        for &wi in &w.weights {
            assert!((wi - 1.0).abs() < 0.2 + 0.3, "weight {wi}");
        }
    }

    #[test]
    fn concentrated_seeds_get_lower_weights_inside_the_mass() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        // 1D two-value synthetic: 90% of seeds near 0.1, 10% near 0.9.
        let mut z0s: Vec<Vec<f64>> = Vec::new();
        for i in 0..2000 {
            if i % 10 == 0 {
                z0s.push(vec![0.9 + 0.02 * rng.gen::<f64>()]);
            } else {
                z0s.push(vec![0.1 + 0.02 * rng.gen::<f64>()]);
            }
        }
        let seeds = seeds_from_z0(&z0s);
        let w = estimate_sampling_weights(&seeds, &mut rng).unwrap();
        let dense = w.weight_for(&GoalVector(vec![0.1]));
        let sparse = w.weight_for(&GoalVector(vec![0.9]));
        assert!(dense < sparse, "dense {dense} sparse {sparse}");
    }

    #[test]
    fn repeated_single_point_stays_finite() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let z0s: Vec<Vec<f64>> = (0..200).map(|_| vec![0.3, 0.6]).collect();
        let seeds = seeds_from_z0(&z0s);
        let w = estimate_sampling_weights(&seeds, &mut rng).unwrap();
        for &wi in &w.weights {
            assert!(wi.is_finite() && wi > 0.0);
        }
    }

    #[test]
    fn equal_weights_sample_uniformly_and_zero_weight_never_drawn() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let weights = vec![1.0, 1.0, 0.0, 1.0, 1.0];
        let mut seen = std::collections::HashSet::new();
        for _ in 0..200 {
            let idx = sample_source_indices(&weights, 2, &mut rng).unwrap();
            assert_eq!(idx.len(), 2);
            assert!(!idx.contains(&2));
            seen.extend(idx);
        }
        assert_eq!(seen, [0usize, 1, 3, 4].into_iter().collect());
    }

    #[test]
    fn resampled_marginals_approach_uniform_as_n_grows() {
        // Skewed 2D pool with analytic inverse-density weights: the KS
        // distance of each resampled marginal to uniform shrinks over
        // n in {500, 2000, 5000} (seed verified once and pinned).
        let a: [f64; 2] = [1.5, -1.0];
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let pool: Vec<Vec<f64>> = (0..100_000)
            .map(|_| {
                a.iter()
                    .map(|&ai| {
                        let u: f64 = rng.gen();
                        (1.0 + u * (ai.exp() - 1.0)).ln() / ai
                    })
                    .collect()
            })
            .collect();
        let weights: Vec<f64> = pool
            .iter()
            .map(|z| {
                1.0 / z
                    .iter()
                    .zip(a)
                    .map(|(zi, ai)| ai * (ai * zi).exp() / (ai.exp() - 1.0))
                    .product::<f64>()
            })
            .collect();
        let ks_to_uniform = |xs: &mut Vec<f64>| -> f64 {
            xs.sort_by(|x, y| x.partial_cmp(y).unwrap());
            let n = xs.len() as f64;
            let mut ks = 0.0f64;
            for (i, x) in xs.iter().enumerate() {
                ks = ks.max(((i + 1) as f64 / n - x).abs());
                ks = ks.max((x - i as f64 / n).abs());
            }
            ks
        };
        let mut prev = f64::INFINITY;
        for n in [500usize, 2000, 5000] {
            let idx = sample_source_indices(&weights, n, &mut rng).unwrap();
            let mut worst = 0.0f64;
            for dim in [0usize, 1] {
                let mut xs: Vec<f64> = idx.iter().map(|&i| pool[i][dim]).collect();
                worst = worst.max(ks_to_uniform(&mut xs));
            }
            assert!(worst < prev, "KS did not shrink at n={n}: {worst} vs {prev}");
            assert!(worst < 0.1, "KS {worst} at n={n}");
            prev = worst;
        }
    }

    #[test]
    fn sampling_more_than_usable_fails() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let weights = vec![1.0, 0.0];
        assert!(matches!(
            sample_source_indices(&weights, 2, &mut rng),
            Err(ProbeGenError::InsufficientSeeds { requested: 2, usable: 1 })
        ));
    }

    #[test]
    fn sample_goal_respects_feasible_ranges() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for (z0, lo_neg, hi_pos) in [
            (0.8, -0.7, 0.2),  // negative side full, positive clipped to 0.2
            (0.05, 0.0, 0.7),  // negative side infeasible
            (0.5, -0.5, 0.5),  // both sides clipped symmetrically
        ] {
            for _ in 0..500 {
                let (z_star, active, deltas) =
                    sample_goal(&GoalVector(vec![z0]), 1, &mut rng).unwrap();
                assert!(active[0]);
                let d = deltas[0];
                assert!(d.abs() >= MIN_DELTA - 1e-12 && d.abs() <= MAX_DELTA + 1e-12);
                if d < 0.0 {
                    assert!(d >= lo_neg - 1e-12, "z0={z0} delta={d}");
                    assert!(lo_neg != 0.0, "negative side should be infeasible for z0={z0}");
                } else {
                    assert!(d <= hi_pos + 1e-12, "z0={z0} delta={d}");
                }
                assert!((0.0..=1.0).contains(&z_star[0]));
            }
        }
    }

    #[test]
    fn sample_goal_copies_inactive_components() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let z0 = GoalVector(vec![0.2, 0.4, 0.6, 0.8]);
        let (z_star, active, deltas) = sample_goal(&z0, 2, &mut rng).unwrap();
        assert_eq!(active.iter().filter(|&&a| a).count(), 2);
        for i in 0..4 {
            if !active[i] {
                assert_eq!(z_star[i], z0[i]);
                assert_eq!(deltas[i], 0.0);
            }
        }
    }

    fn small_pool() -> (Vec<SeedText>, SamplingWeights, GoalSpaceConfig) {
        let config = GoalSpaceConfig::standard();
        let records: Vec<Result<CorpusRecord, String>> =
            (0..12).map(|i| record(&format!("seed{i}"), 60 + i * 13)).collect();
        let report = ingest_corpus(records, &config);
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let weights = estimate_sampling_weights(&report.seeds, &mut rng).unwrap();
        (report.seeds, weights, config)
    }

    #[test]
    fn build_probe_produces_expected_counts() {
        let (seeds, weights, config) = small_pool();
        let spec = ProbeSpec {
            n_sources: 3,
            goals_per_source: 4,
            n_active: 2,
            strategy: "direct".into(),
            rng_seed: 1234,
        };
        let items = build_probe(&seeds, &weights, &config, &spec).unwrap();
        assert_eq!(items.len(), 12);
        let distinct: std::collections::HashSet<&str> =
            items.iter().map(|i| i.seed_id.as_str()).collect();
        assert_eq!(distinct.len(), 3);
        for item in &items {
            assert_eq!(item.active.iter().filter(|&&a| a).count(), 2);
            for i in 0..item.active.len() {
                if item.active[i] {
                    assert!(item.deltas[i].abs() >= MIN_DELTA - 1e-12);
                    assert!(item.deltas[i].abs() <= MAX_DELTA + 1e-12);
                    assert!((item.z0[i] + item.deltas[i] - item.z_star[i]).abs() < 1e-12);
                } else {
                    assert_eq!(item.z0[i], item.z_star[i]);
                }
            }
        }
    }

    #[test]
    fn reference_probe_sizes() {
        // The two standard probe shapes: 64 sources x 32 goals (N=2048) and
        // 384 sources x 8 goals (N=3072).
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let seeds: Vec<SeedText> = (0..500)
            .map(|i| {
                let z0 = GoalVector((0..4).map(|_| rng.gen::<f64>()).collect());
                SeedText {
                    id: format!("s{i:04}"),
                    source_tag: "syn".into(),
                    text: format!("text {i}"),
                    raw: z0.as_slice().to_vec(),
                    z0,
                }
            })
            .collect();
        let weights = SamplingWeights {
            weights: vec![1.0; seeds.len()],
            classifier: LogisticModel {
                coefficients: vec![0.0; 4],
                intercept: 0.0,
                l2: 0.0,
                iterations: 0,
            },
        };
        let config = GoalSpaceConfig::standard();
        let main = ProbeSpec {
            n_sources: 64,
            goals_per_source: 32,
            n_active: 3,
            strategy: "direct".into(),
            rng_seed: 1,
        };
        assert_eq!(build_probe(&seeds, &weights, &config, &main).unwrap().len(), 2048);
        let training = ProbeSpec {
            n_sources: 384,
            goals_per_source: 8,
            n_active: 1,
            strategy: "direct".into(),
            rng_seed: 2,
        };
        let items = build_probe(&seeds, &weights, &config, &training).unwrap();
        assert_eq!(items.len(), 3072);
        let distinct: std::collections::HashSet<&str> =
            items.iter().map(|i| i.seed_id.as_str()).collect();
        assert_eq!(distinct.len(), 384);
    }

    #[test]
    fn single_item_probe_with_all_dimensions_active() {
        let (seeds, weights, config) = small_pool();
        let spec = ProbeSpec {
            n_sources: 1,
            goals_per_source: 1,
            n_active: 4,
            strategy: "direct".into(),
            rng_seed: 5,
        };
        let items = build_probe(&seeds, &weights, &config, &spec).unwrap();
        assert_eq!(items.len(), 1);
        assert!(items[0].active.iter().all(|&a| a));
    }

    #[test]
    fn probe_files_are_byte_identical_for_identical_seeds() {
        let (seeds, weights, config) = small_pool();
        let spec = ProbeSpec {
            n_sources: 2,
            goals_per_source: 3,
            n_active: 3,
            strategy: "direct+negative".into(),
            rng_seed: 777,
        };
        let mut buf_a = Vec::new();
        let items_a = build_probe(&seeds, &weights, &config, &spec).unwrap();
        write_probe(&mut buf_a, &config, &spec, &items_a).unwrap();
        let mut buf_b = Vec::new();
        let items_b = build_probe(&seeds, &weights, &config, &spec).unwrap();
        write_probe(&mut buf_b, &config, &spec, &items_b).unwrap();
        assert_eq!(buf_a, buf_b);

        let different = ProbeSpec { rng_seed: 778, ..spec.clone() };
        let items_c = build_probe(&seeds, &weights, &config, &different).unwrap();
        assert_ne!(items_a, items_c);
    }

    #[test]
    fn probe_file_round_trips() {
        let (seeds, weights, config) = small_pool();
        let spec = ProbeSpec {
            n_sources: 2,
            goals_per_source: 2,
            n_active: 1,
            strategy: "chain_of_thought".into(),
            rng_seed: 4,
        };
        let items = build_probe(&seeds, &weights, &config, &spec).unwrap();
        let mut buf = Vec::new();
        write_probe(&mut buf, &config, &spec, &items).unwrap();
        let (config2, spec2, items2) = read_probe(std::io::Cursor::new(buf)).unwrap();
        assert_eq!(config, config2);
        assert_eq!(spec, spec2);
        assert_eq!(items, items2);
    }

    #[test]
    fn probe_file_without_header_is_rejected() {
        let line = serde_json::to_string(&ProbeRecord::Item(Box::new(ProbeItem {
            id: "x#0".into(),
            seed_id: "x".into(),
            source_text: "t".into(),
            z0: GoalVector(vec![0.5]),
            z_star: GoalVector(vec![0.6]),
            active: vec![true],
            deltas: vec![0.1],
            strategy: "direct".into(),
            rng_seed: 0,
            prompt: RenderedPrompt {
                text: "p".into(),
                slot_order: vec![0],
                strategy: "direct".parse().unwrap(),
            },
        })))
        .unwrap();
        assert!(read_probe(std::io::Cursor::new(line)).is_err());
    }

    #[test]
    fn weight_for_matches_formula() {
        let model = LogisticModel {
            coefficients: vec![0.0],
            intercept: (0.8f64 / 0.2f64).ln(), // p = 0.8
            l2: LOGISTIC_L2,
            iterations: 0,
        };
        let w = SamplingWeights { weights: vec![], classifier: model };
        let got = w.weight_for(&GoalVector(vec![0.0]));
        assert!((got - 0.25).abs() < 1e-12);
    }

    #[test]
    fn length_dimension_raw_value_matches_word_count() {
        let config = GoalSpaceConfig::standard();
        let report = ingest_corpus(vec![record("a", 100)], &config);
        let seed = &report.seeds[0];
        let idx = config.index_of(DIM_TEXT_LENGTH).unwrap();
        assert_eq!(seed.raw[idx], 100.0);
    }
}
