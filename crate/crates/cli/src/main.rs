//! `steer` — goal-space steerability evaluation pipeline.
//!
//! Typical flow: `fit` normalization bounds from a seed corpus, `probe` to
//! build a steerability probe, `run` it against a chat endpoint, `judge` and
//! `review` groundedness, `metrics` to score grounded rewrites, and `report`
//! to aggregate. `baseline` and `rl-check` are standalone checks.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use steer_core::analysis::{
    build_report, compute_metric_records, export_flow_csv, read_metrics, write_metrics,
    MetricSelector,
};
use steer_core::goalspace::{fit_normalization, DimensionSamples, GoalSpaceConfig};
use steer_core::judge::{
    self, build_review_queue, finalize_decisions, judge_groundedness, read_jsonl, run_review,
    write_jsonl, Answer, JudgmentRecord, ReviewDecision, ReviewItem,
};
use steer_core::llmrun::{
    read_responses, run_probe, DecodingConfig, HttpEndpoint, ResponseRecord, RetryPolicy,
    RunConfig,
};
use steer_core::probegen::{
    build_probe, estimate_sampling_weights, ingest_corpus, read_corpus_jsonl, read_probe,
    write_probe, ProbeItem, ProbeSpec, SamplingWeights,
};
use steer_core::promptgen::{render_prompt, PromptStrategy, RenderInputs};
use steer_core::rlmath::{maloop_objective, rejection_sample, RlHyperparams, RolloutGroup};
use steer_core::steermetrics::random_baseline;

#[derive(Parser)]
#[command(name = "steer", version, about = "Goal-space steerability evaluation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit goal-space normalization bounds from a seed corpus (JSONL).
    Fit {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build a steerability probe from a seed corpus.
    Probe {
        #[arg(long)]
        corpus: PathBuf,
        /// Goal-space config JSON; fitted from the corpus when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        sources: usize,
        #[arg(long)]
        goals_per_source: usize,
        /// Active goal dimensions per item.
        #[arg(long, default_value_t = 3)]
        active: usize,
        #[arg(long, default_value = "direct")]
        strategy: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Drive a chat endpoint over a probe, journaling responses.
    Run {
        #[arg(long)]
        probe: PathBuf,
        /// Chat-completions base URL, e.g. http://localhost:8000/v1
        #[arg(long)]
        endpoint: String,
        #[arg(long)]
        model: String,
        /// Override the probe's prompting strategy (re-renders prompts).
        #[arg(long)]
        strategy: Option<String>,
        #[arg(long, default_value_t = 1)]
        best_of: usize,
        #[arg(long, default_value_t = 1)]
        parallel: usize,
        #[arg(long)]
        out: PathBuf,
        /// Best-of sampling decoding (min-p 0.2, temperature 1) instead of greedy.
        #[arg(long)]
        sampled: bool,
        #[arg(long, default_value_t = 5)]
        max_retries: u32,
    },
    /// Monte-Carlo random baseline: median steering error of uniform outputs.
    Baseline {
        #[arg(long)]
        probe: PathBuf,
        /// Uniform draws per probe item.
        #[arg(long, default_value_t = 100)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Judge groundedness of rewrites with an LLM judge.
    Judge {
        #[arg(long)]
        responses: PathBuf,
        #[arg(long)]
        probe: PathBuf,
        #[arg(long)]
        endpoint: String,
        #[arg(long)]
        model: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        parallel: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Review flagged judgments interactively (or via a decision script).
    Review {
        #[arg(long)]
        judgments: PathBuf,
        #[arg(long)]
        responses: PathBuf,
        #[arg(long)]
        probe: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Scripted decisions (one approve/overrule per line) instead of stdin.
        #[arg(long)]
        script: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Compute steering metrics over grounded responses.
    Metrics {
        #[arg(long)]
        responses: PathBuf,
        #[arg(long)]
        probe: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Review decisions; without them, all non-rejected responses count.
        #[arg(long)]
        decisions: Option<PathBuf>,
        /// Print the binned-metric summary instead of the raw one.
        #[arg(long)]
        binned: bool,
    },
    /// Aggregate a metrics file into a report plus flow-field CSVs.
    Report {
        #[arg(long)]
        metrics: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 10)]
        grid: usize,
    },
    /// Evaluate the RL objective decomposition over rollout groups.
    RlCheck {
        #[arg(long)]
        groups: PathBuf,
        #[arg(long, default_value_t = 0.01)]
        beta: f64,
        #[arg(long, default_value_t = 1.0)]
        lambda: f64,
        #[arg(long, default_value_t = 1.0)]
        tau: f64,
        #[arg(long, default_value_t = 16)]
        k: usize,
        /// Sampling-weights model JSON; sample weight defaults to 1.
        #[arg(long)]
        weights: Option<PathBuf>,
    },
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Fit { corpus, out } => cmd_fit(&corpus, &out),
        Command::Probe { corpus, config, sources, goals_per_source, active, strategy, seed, out } => {
            cmd_probe(&corpus, config.as_deref(), sources, goals_per_source, active, &strategy, seed, &out)
        }
        Command::Run { probe, endpoint, model, strategy, best_of, parallel, out, sampled, max_retries } => {
            cmd_run(&probe, &endpoint, &model, strategy.as_deref(), best_of, parallel, &out, sampled, max_retries)
        }
        Command::Baseline { probe, trials, seed } => cmd_baseline(&probe, trials, seed),
        Command::Judge { responses, probe, endpoint, model, out, parallel, seed } => {
            cmd_judge(&responses, &probe, &endpoint, &model, &out, parallel, seed)
        }
        Command::Review { judgments, responses, probe, out, script, seed } => {
            cmd_review(&judgments, &responses, &probe, &out, script.as_deref(), seed)
        }
        Command::Metrics { responses, probe, out, decisions, binned } => {
            cmd_metrics(&responses, &probe, &out, decisions.as_deref(), binned)
        }
        Command::Report { metrics, out, grid } => cmd_report(&metrics, &out, grid),
        Command::RlCheck { groups, beta, lambda, tau, k, weights } => {
            cmd_rl_check(&groups, beta, lambda, tau, k, weights.as_deref())
        }
    }
}

fn open_reader(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(
        File::open(path).with_context(|| format!("opening {}", path.display()))?,
    ))
}

fn create_writer(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

fn fit_config_from_corpus(corpus: &Path) -> Result<GoalSpaceConfig> {
    // Ingest under unit bounds to collect raw values, then fit the real
    // bounds from the surviving seeds.
    let template = GoalSpaceConfig::standard();
    let records = read_corpus_jsonl(open_reader(corpus)?);
    let report = ingest_corpus(records, &template);
    if report.seeds.is_empty() {
        bail!("no usable seed texts in {}", corpus.display());
    }
    let samples: Vec<DimensionSamples> = template
        .dimensions
        .iter()
        .enumerate()
        .map(|(i, d)| DimensionSamples {
            id: d.id.clone(),
            metric: d.metric,
            values: report.seeds.iter().map(|s| s.raw[i]).collect(),
        })
        .collect();
    Ok(fit_normalization(&samples)?)
}

fn cmd_fit(corpus: &Path, out: &Path) -> Result<()> {
    let config = fit_config_from_corpus(corpus)?;
    std::fs::write(out, config.to_json())?;
    for d in &config.dimensions {
        println!("{}: [{:.4}, {:.4}]", d.id, d.raw_min, d.raw_max);
    }
    eprintln!("wrote {}", out.display());
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_probe(
    corpus: &Path,
    config: Option<&Path>,
    sources: usize,
    goals_per_source: usize,
    active: usize,
    strategy: &str,
    seed: u64,
    out: &Path,
) -> Result<()> {
    let config = match config {
        Some(path) => GoalSpaceConfig::from_json(&std::fs::read_to_string(path)?)?,
        None => fit_config_from_corpus(corpus)?,
    };
    let records = read_corpus_jsonl(open_reader(corpus)?);
    let report = ingest_corpus(records, &config);
    eprintln!(
        "ingested {} seeds ({} rejected: {:?})",
        report.seeds.len(),
        report.rejected.len(),
        report.rejection_counts()
    );
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let weights = estimate_sampling_weights(&report.seeds, &mut rng)?;
    let spec = ProbeSpec {
        n_sources: sources,
        goals_per_source,
        n_active: active,
        strategy: strategy.parse::<PromptStrategy>()?.id(),
        rng_seed: seed,
    };
    let items = build_probe(&report.seeds, &weights, &config, &spec)?;
    write_probe(create_writer(out)?, &config, &spec, &items)?;
    println!("{} probe items -> {}", items.len(), out.display());
    Ok(())
}

/// Re-renders item prompts under a different strategy, deterministically
/// from each item's stored rng seed.
fn override_strategy(
    items: &mut [ProbeItem],
    config: &GoalSpaceConfig,
    strategy: PromptStrategy,
) -> Result<()> {
    let ids: Vec<String> = config.dimensions.iter().map(|d| d.id.clone()).collect();
    for item in items.iter_mut() {
        let mut rng = ChaCha8Rng::seed_from_u64(item.rng_seed ^ 0x5EED_0000);
        item.prompt = render_prompt(
            RenderInputs { dimension_ids: &ids, active: &item.active, deltas: &item.deltas },
            strategy,
            &mut rng,
        )?;
        item.strategy = strategy.id();
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_run(
    probe: &Path,
    endpoint: &str,
    model: &str,
    strategy: Option<&str>,
    best_of: usize,
    parallel: usize,
    out: &Path,
    sampled: bool,
    max_retries: u32,
) -> Result<()> {
    let (config, _, mut items) = read_probe(open_reader(probe)?)?;
    if let Some(s) = strategy {
        override_strategy(&mut items, &config, s.parse()?)?;
    }
    let decoding = if sampled || best_of > 1 {
        DecodingConfig::sampled()
    } else {
        DecodingConfig::greedy()
    };
    let cfg = RunConfig {
        model: model.to_string(),
        decoding,
        retry: RetryPolicy { max_retries, ..RetryPolicy::default() },
        parallelism: parallel,
        best_of,
    };
    let http = HttpEndpoint::new(endpoint);
    let records = run_probe(&items, &http, &config, &cfg, out)?;
    let usable = records.iter().filter(|r| r.z_hat.is_some()).count();
    println!("{} records ({} usable) -> {}", records.len(), usable, out.display());
    Ok(())
}

fn cmd_baseline(probe: &Path, trials: usize, seed: u64) -> Result<()> {
    let (_, _, items) = read_probe(open_reader(probe)?)?;
    let z_stars: Vec<_> = items.iter().map(|i| i.z_star.clone()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let median = random_baseline(&z_stars, trials, &mut rng)?;
    println!(
        "random baseline median steering error: {median:.4} ({} items x {trials} trials)",
        z_stars.len()
    );
    Ok(())
}

fn load_run(
    responses: &Path,
    probe: &Path,
) -> Result<(GoalSpaceConfig, Vec<ProbeItem>, Vec<ResponseRecord>)> {
    let (config, _, items) = read_probe(open_reader(probe)?)?;
    let records = read_responses(responses)?;
    Ok((config, items, records))
}

fn cmd_judge(
    responses: &Path,
    probe: &Path,
    endpoint: &str,
    model: &str,
    out: &Path,
    parallel: usize,
    seed: u64,
) -> Result<()> {
    let (_, items, records) = load_run(responses, probe)?;
    let by_id: std::collections::HashMap<&str, &ProbeItem> =
        items.iter().map(|i| (i.id.as_str(), i)).collect();
    let inputs: Vec<(String, String, String)> = records
        .iter()
        .filter(|r| r.selected && r.rewrite_text.is_some())
        .filter_map(|r| {
            by_id.get(r.item_id.as_str()).map(|item| {
                (
                    judge::record_id(r),
                    item.source_text.clone(),
                    r.rewrite_text.clone().unwrap_or_default(),
                )
            })
        })
        .collect();
    let http = HttpEndpoint::new(endpoint);
    let judgments =
        judge_groundedness(&inputs, &http, model, &RetryPolicy::default(), parallel, seed)?;
    write_jsonl(create_writer(out)?, &judgments)?;
    let flagged = judgments.iter().filter(|j| j.answer != Answer::Yes).count();
    println!("{} judgments ({flagged} flagged) -> {}", judgments.len(), out.display());
    Ok(())
}

fn cmd_review(
    judgments_path: &Path,
    responses: &Path,
    probe: &Path,
    out: &Path,
    script: Option<&Path>,
    seed: u64,
) -> Result<()> {
    let judgments: Vec<JudgmentRecord> = read_jsonl(open_reader(judgments_path)?)?;
    let (_, items, records) = load_run(responses, probe)?;
    let by_item: std::collections::HashMap<&str, &ProbeItem> =
        items.iter().map(|i| (i.id.as_str(), i)).collect();
    let by_record: std::collections::HashMap<String, &ResponseRecord> =
        records.iter().map(|r| (judge::record_id(r), r)).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let queue_ids = build_review_queue(&judgments, &mut rng);
    let judgment_by_id: std::collections::HashMap<&str, &JudgmentRecord> =
        judgments.iter().map(|j| (j.record_id.as_str(), j)).collect();
    let queue: Vec<ReviewItem> = queue_ids
        .iter()
        .filter_map(|id| {
            let j = judgment_by_id.get(id.as_str())?;
            let r = by_record.get(id)?;
            let item = by_item.get(r.item_id.as_str())?;
            Some(ReviewItem {
                record_id: id.clone(),
                original: item.source_text.clone(),
                rewrite: r.rewrite_text.clone().unwrap_or_default(),
                answer: j.answer,
                rationale: j.rationale.clone(),
            })
        })
        .collect();

    // Resume: skip records already decided in the output file.
    let already: HashSet<String> = if out.exists() {
        read_jsonl::<ReviewDecision, _>(open_reader(out)?)?
            .into_iter()
            .map(|d| d.record_id)
            .collect()
    } else {
        HashSet::new()
    };

    let mut sink = BufWriter::new(
        std::fs::OpenOptions::new().create(true).append(true).open(out)?,
    );
    let mut persist = |d: &ReviewDecision| -> Result<(), judge::JudgeError> {
        let line = serde_json::to_string(d).map_err(|e| judge::JudgeError::Format(e.to_string()))?;
        writeln!(sink, "{line}")?;
        sink.flush()?;
        Ok(())
    };

    let reviewed = match script {
        Some(path) => {
            let mut input = open_reader(path)?;
            run_review(&queue, &already, &mut input, &mut std::io::stdout().lock(), &mut persist)?
        }
        None => {
            let stdin = std::io::stdin();
            let mut input = stdin.lock();
            run_review(&queue, &already, &mut input, &mut std::io::stdout().lock(), &mut persist)?
        }
    };

    // Auto-ground unflagged Yes verdicts alongside the reviewed decisions.
    let all_reviewed: Vec<ReviewDecision> = {
        let mut v: Vec<ReviewDecision> = if out.exists() {
            read_jsonl(open_reader(out)?)?
        } else {
            Vec::new()
        };
        v.retain(|d| d.human_override.is_some());
        v
    };
    let finals = finalize_decisions(&judgments, &queue_ids, &all_reviewed);
    let mut writer = create_writer(out)?;
    write_jsonl(&mut writer, &finals)?;
    writer.flush()?;
    println!(
        "{} decisions ({} reviewed this session) -> {}",
        finals.len(),
        reviewed.len(),
        out.display()
    );
    Ok(())
}

fn cmd_metrics(
    responses: &Path,
    probe: &Path,
    out: &Path,
    decisions: Option<&Path>,
    binned: bool,
) -> Result<()> {
    let (config, items, records) = load_run(responses, probe)?;
    let decision_rows: Option<Vec<ReviewDecision>> = match decisions {
        Some(path) => Some(read_jsonl(open_reader(path)?)?),
        None => None,
    };
    let metric_records = compute_metric_records(&items, &records, decision_rows.as_deref())?;
    write_metrics(create_writer(out)?, &config, &metric_records)?;
    let selector = if binned {
        MetricSelector::BinnedSteeringError
    } else {
        MetricSelector::SteeringError
    };
    if let Ok(agg) = steer_core::analysis::aggregate(&metric_records, selector) {
        println!(
            "{}: median {:.4} (IQR {:.4}-{:.4}, n={})",
            selector.name(),
            agg.stats.median,
            agg.stats.q25,
            agg.stats.q75,
            agg.stats.n
        );
    }
    println!("{} metric records -> {}", metric_records.len(), out.display());
    Ok(())
}

fn cmd_report(metrics: &Path, out_dir: &Path, grid: usize) -> Result<()> {
    let (config, records) = read_metrics(open_reader(metrics)?)?;
    let report = build_report(&records)?;
    std::fs::create_dir_all(out_dir)?;
    let report_path = out_dir.join("report.json");
    std::fs::write(&report_path, serde_json::to_string_pretty(&report)?)?;
    let dims: Vec<String> = config.dimensions.iter().map(|d| d.id.clone()).collect();
    let csvs = export_flow_csv(out_dir, &dims, &records, grid)?;
    for (name, agg) in &report.summaries {
        println!(
            "{name}: median {:.4}, mean {:.4} (std {:.4}), n={}",
            agg.stats.median, agg.stats.mean, agg.stats.std, agg.stats.n
        );
    }
    println!(
        "report -> {} (+ {} flow CSVs in {})",
        report_path.display(),
        csvs.len(),
        out_dir.display()
    );
    Ok(())
}

fn cmd_rl_check(
    groups_path: &Path,
    beta: f64,
    lambda: f64,
    tau: f64,
    k: usize,
    weights: Option<&Path>,
) -> Result<()> {
    let groups: Vec<RolloutGroup> = read_jsonl(open_reader(groups_path)?)?;
    let weights_model: Option<SamplingWeights> = match weights {
        Some(path) => Some(serde_json::from_str(&std::fs::read_to_string(path)?)?),
        None => None,
    };
    println!("group  w~        policy      kl          regularizer  total");
    for (i, group) in groups.iter().enumerate() {
        let hparams = RlHyperparams { beta, lambda_tau: lambda, tau, k: k.min(group.len()) };
        let selected = rejection_sample(&group.rewards, hparams.k)?;
        let w = match (&weights_model, &group.z0) {
            (Some(model), Some(z0)) => model.weight_for(z0),
            _ => 1.0,
        };
        let value = maloop_objective(group, &selected, &hparams, w)?;
        println!(
            "{i:<6} {w:<9.4} {:<11.6} {:<11.6} {:<12.6} {:.6}",
            value.policy_term, value.kl_term, value.regularizer, value.total
        );
    }
    Ok(())
}
