//! Aggregation, stratification, statistical tests, flow-field export,
//! copy-paste statistics, and entanglement-residual correlations over
//! metric records.

mod rankstats;

pub use rankstats::{mann_whitney_u, spearman_rho, wilcoxon_signed_rank};

use std::collections::{BTreeMap, HashMap};
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::goalspace::{quantile_sorted, GoalSpaceConfig, GOALSPACE_SCHEMA_VERSION};
use crate::judge::{grounded_ids, record_id, ReviewDecision};
use crate::llmrun::{FilterStatus, ResponseRecord};
use crate::probegen::ProbeItem;
use crate::steermetrics::{binned_scores, MetricRecord, SteerScores};
use crate::textmetrics::{sentence_bleu, tokenize};

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("empty input: {0}")]
    EmptyInput(String),
    #[error("insufficient strata: {0}")]
    InsufficientStrata(String),
    #[error("degenerate input: {0}")]
    DegenerateInput(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("format: {0}")]
    Format(String),
}

/// Distribution summary: median with IQR, mean with sample standard
/// deviation, and the empirical 95% interval (2.5th/97.5th percentiles).
/// Quantiles use linear interpolation between order statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryStats {
    pub n: usize,
    pub median: f64,
    pub q25: f64,
    pub q75: f64,
    pub mean: f64,
    pub std: f64,
    pub ci95_low: f64,
    pub ci95_high: f64,
}

impl SummaryStats {
    pub fn from_values(values: &[f64]) -> Result<SummaryStats, AnalysisError> {
        if values.is_empty() {
            return Err(AnalysisError::EmptyInput("no values to summarize".into()));
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let n = sorted.len();
        let mean = sorted.iter().sum::<f64>() / n as f64;
        let std = if n > 1 {
            (sorted.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Ok(SummaryStats {
            n,
            median: quantile_sorted(&sorted, 0.5),
            q25: quantile_sorted(&sorted, 0.25),
            q75: quantile_sorted(&sorted, 0.75),
            mean,
            std,
            ci95_low: quantile_sorted(&sorted, 0.025),
            ci95_high: quantile_sorted(&sorted, 0.975),
        })
    }
}

/// Which metric column to aggregate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricSelector {
    SteeringError,
    Miscalibration,
    MiscalibrationSigned,
    Orthogonality,
    BinnedSteeringError,
    BinnedMiscalibration,
    BinnedOrthogonality,
    Bleu,
}

impl MetricSelector {
    pub const ALL: [MetricSelector; 8] = [
        MetricSelector::SteeringError,
        MetricSelector::Miscalibration,
        MetricSelector::MiscalibrationSigned,
        MetricSelector::Orthogonality,
        MetricSelector::BinnedSteeringError,
        MetricSelector::BinnedMiscalibration,
        MetricSelector::BinnedOrthogonality,
        MetricSelector::Bleu,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MetricSelector::SteeringError => "steering_error",
            MetricSelector::Miscalibration => "miscalibration",
            MetricSelector::MiscalibrationSigned => "miscalibration_signed",
            MetricSelector::Orthogonality => "orthogonality",
            MetricSelector::BinnedSteeringError => "binned_steering_error",
            MetricSelector::BinnedMiscalibration => "binned_miscalibration",
            MetricSelector::BinnedOrthogonality => "binned_orthogonality",
            MetricSelector::Bleu => "bleu",
        }
    }

    pub fn extract(self, record: &MetricRecord) -> Option<f64> {
        match self {
            MetricSelector::SteeringError => Some(record.steering_error),
            MetricSelector::Miscalibration => record.miscalibration,
            MetricSelector::MiscalibrationSigned => record.miscalibration_signed,
            MetricSelector::Orthogonality => record.orthogonality,
            MetricSelector::BinnedSteeringError => Some(record.binned_steering_error),
            MetricSelector::BinnedMiscalibration => record.binned_miscalibration,
            MetricSelector::BinnedOrthogonality => record.binned_orthogonality,
            MetricSelector::Bleu => Some(record.bleu),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateResult {
    pub stats: SummaryStats,
    /// Records excluded because the metric was flagged absent.
    pub n_excluded: usize,
}

/// Summarizes one metric over records, excluding flagged-absent values.
pub fn aggregate(
    records: &[MetricRecord],
    selector: MetricSelector,
) -> Result<AggregateResult, AnalysisError> {
    let values: Vec<f64> = records.iter().filter_map(|r| selector.extract(r)).collect();
    let n_excluded = records.len() - values.len();
    Ok(AggregateResult { stats: SummaryStats::from_values(&values)?, n_excluded })
}

/// Correlated-vs-anti-correlated stratification of two-dimension requests.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StratifiedComparison {
    pub dim_a: usize,
    pub dim_b: usize,
    pub correlated_ids: Vec<String>,
    pub anti_correlated_ids: Vec<String>,
    pub correlated: SummaryStats,
    pub anti_correlated: SummaryStats,
    pub mann_whitney_u: f64,
    pub p_value: f64,
}

/// Splits records whose probe items have both dimensions active by whether
/// the requested deltas share a sign, and compares steering error between
/// the groups with a two-sided Mann-Whitney U test.
pub fn stratify_correlated(
    records: &[MetricRecord],
    dim_a: usize,
    dim_b: usize,
) -> Result<StratifiedComparison, AnalysisError> {
    if dim_a == dim_b {
        return Err(AnalysisError::InvalidArgument("dimensions must differ".into()));
    }
    let mut corr = Vec::new();
    let mut anti = Vec::new();
    for r in records {
        if dim_a >= r.active.len() || dim_b >= r.active.len() || !r.active[dim_a] || !r.active[dim_b] {
            continue;
        }
        if r.deltas[dim_a].signum() == r.deltas[dim_b].signum() {
            corr.push(r);
        } else {
            anti.push(r);
        }
    }
    if corr.is_empty() || anti.is_empty() {
        return Err(AnalysisError::InsufficientStrata(format!(
            "correlated: {}, anti-correlated: {}",
            corr.len(),
            anti.len()
        )));
    }
    let corr_errors: Vec<f64> = corr.iter().map(|r| r.steering_error).collect();
    let anti_errors: Vec<f64> = anti.iter().map(|r| r.steering_error).collect();
    let (u, p) = mann_whitney_u(&corr_errors, &anti_errors)?;
    Ok(StratifiedComparison {
        dim_a,
        dim_b,
        correlated_ids: corr.iter().map(|r| r.record_id.clone()).collect(),
        anti_correlated_ids: anti.iter().map(|r| r.record_id.clone()).collect(),
        correlated: SummaryStats::from_values(&corr_errors)?,
        anti_correlated: SummaryStats::from_values(&anti_errors)?,
        mann_whitney_u: u,
        p_value: p,
    })
}

/// One interpolation cell of a flow field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowCell {
    pub x: f64,
    pub y: f64,
    /// Kernel-weighted mean movement; `None` for unsupported cells.
    pub mean: Option<(f64, f64)>,
    pub weight: f64,
    pub support: usize,
}

/// Goal-space movement restricted to a dimension pair: the raw per-record
/// vectors plus a kernel-interpolated grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FlowField {
    pub dim_a: usize,
    pub dim_b: usize,
    pub grid_n: usize,
    pub bandwidth: f64,
    /// (origin, movement) pairs, exactly `(zhat - z0)` restricted to the pair.
    pub vectors: Vec<((f64, f64), (f64, f64))>,
    pub cells: Vec<FlowCell>,
}

/// Minimum total kernel weight for a supported cell.
pub const FLOW_WEIGHT_THRESHOLD: f64 = 1e-9;

/// Builds the movement field for a dimension pair. Grid nodes are cell
/// centers; interpolation is a Gaussian-weighted mean with bandwidth equal
/// to the cell size, truncated at one cell size so empty regions are never
/// extrapolated.
pub fn flow_field(
    records: &[MetricRecord],
    dim_a: usize,
    dim_b: usize,
    grid_n: usize,
) -> FlowField {
    let h = 1.0 / grid_n.max(1) as f64;
    let vectors: Vec<((f64, f64), (f64, f64))> = records
        .iter()
        .filter(|r| dim_a < r.z0.dim() && dim_b < r.z0.dim())
        .map(|r| {
            let origin = (r.z0[dim_a], r.z0[dim_b]);
            let movement = (r.z_hat[dim_a] - r.z0[dim_a], r.z_hat[dim_b] - r.z0[dim_b]);
            (origin, movement)
        })
        .collect();

    let mut cells = Vec::with_capacity(grid_n * grid_n);
    for i in 0..grid_n {
        for j in 0..grid_n {
            let cx = (i as f64 + 0.5) * h;
            let cy = (j as f64 + 0.5) * h;
            let mut w_sum = 0.0;
            let mut vx = 0.0;
            let mut vy = 0.0;
            let mut support = 0usize;
            for ((ox, oy), (dx, dy)) in &vectors {
                let r2 = (ox - cx) * (ox - cx) + (oy - cy) * (oy - cy);
                if r2 >= h * h {
                    continue;
                }
                let w = (-r2 / (2.0 * h * h)).exp();
                w_sum += w;
                vx += w * dx;
                vy += w * dy;
                support += 1;
            }
            let mean = if w_sum < FLOW_WEIGHT_THRESHOLD {
                None
            } else {
                Some((vx / w_sum, vy / w_sum))
            };
            cells.push(FlowCell { x: cx, y: cy, mean, weight: w_sum, support });
        }
    }
    FlowField { dim_a, dim_b, grid_n, bandwidth: h, vectors, cells }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CopyPasteStats {
    pub copies: usize,
    pub total: usize,
    pub copy_rate: f64,
    pub bleu: SummaryStats,
}

/// Copy-paste rate (exact match after whitespace normalization, computed at
/// metric time) and the BLEU summary over all records.
pub fn copy_paste_stats(records: &[MetricRecord]) -> Result<CopyPasteStats, AnalysisError> {
    if records.is_empty() {
        return Err(AnalysisError::EmptyInput("no records".into()));
    }
    let copies = records.iter().filter(|r| r.copy_paste).count();
    let bleu_values: Vec<f64> = records.iter().map(|r| r.bleu).collect();
    Ok(CopyPasteStats {
        copies,
        total: records.len(),
        copy_rate: copies as f64 / records.len() as f64,
        bleu: SummaryStats::from_values(&bleu_values)?,
    })
}

/// Residual and source correlation matrices between goal dimensions.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EntanglementReport {
    pub dims: usize,
    /// Spearman correlation between source-goal columns (one row per seed).
    pub source_corr: Vec<Vec<Option<f64>>>,
    /// Spearman correlation between per-dimension regression residuals.
    pub residual_corr: Vec<Vec<Option<f64>>>,
    /// `residual - source` where both are defined.
    pub difference: Vec<Vec<Option<f64>>>,
    /// Set when residuals are (numerically) all zero, e.g. when outputs
    /// exactly equal instruction targets.
    pub degenerate_residuals: bool,
    pub diagnostics: Vec<String>,
}

/// Least squares via normal equations with pivoted elimination. Columns
/// with negligible pivots are dropped (zero coefficient) so group-constant
/// regressors absorbed by demeaning do not fail the solve.
fn least_squares(columns: &[Vec<f64>], y: &[f64]) -> (Vec<f64>, Vec<String>) {
    let k = columns.len();
    let mut diagnostics = Vec::new();
    if k == 0 {
        return (Vec::new(), diagnostics);
    }
    let mut ata = vec![vec![0.0; k]; k];
    let mut aty = vec![0.0; k];
    for i in 0..k {
        for j in 0..k {
            ata[i][j] = columns[i].iter().zip(&columns[j]).map(|(a, b)| a * b).sum();
        }
        aty[i] = columns[i].iter().zip(y).map(|(a, b)| a * b).sum();
    }
    let mut beta = vec![0.0; k];
    let mut used = vec![false; k];
    // Gauss-Jordan with diagonal pivoting; tiny pivots mark rank-deficient
    // columns, which are dropped (zero coefficient).
    for _ in 0..k {
        let mut pivot = None;
        let mut best = 1e-10;
        for (i, &u) in used.iter().enumerate() {
            if !u && ata[i][i].abs() > best {
                best = ata[i][i].abs();
                pivot = Some(i);
            }
        }
        let Some(p) = pivot else { break };
        used[p] = true;
        let diag = ata[p][p];
        for i in 0..k {
            if i == p {
                continue;
            }
            let factor = ata[i][p] / diag;
            if factor == 0.0 {
                continue;
            }
            let pivot_row = ata[p].clone();
            for (aij, apj) in ata[i].iter_mut().zip(&pivot_row) {
                *aij -= factor * apj;
            }
            aty[i] -= factor * aty[p];
        }
    }
    // Full elimination leaves the used submatrix diagonal.
    for i in 0..k {
        if used[i] {
            beta[i] = aty[i] / ata[i][i];
        } else {
            diagnostics.push(format!("column {i} dropped (rank-deficient)"));
        }
    }
    (beta, diagnostics)
}

/// Approximates the per-source random intercept by within-source demeaning
/// of outputs and regressors, regresses each output dimension on its source
/// goal plus all instruction goals, and correlates the residuals per
/// dimension pair. Also reports the raw source-goal correlations (one row
/// per source text) and the difference.
pub fn entanglement_residuals(
    records: &[MetricRecord],
) -> Result<EntanglementReport, AnalysisError> {
    let mut groups: HashMap<&str, Vec<&MetricRecord>> = HashMap::new();
    for r in records {
        groups.entry(r.seed_id.as_str()).or_default().push(r);
    }
    if groups.len() < 2 {
        return Err(AnalysisError::InsufficientStrata("need >= 2 source texts".into()));
    }
    if groups.values().any(|g| g.len() < 2) {
        return Err(AnalysisError::InsufficientStrata("need >= 2 records per source text".into()));
    }
    let dims = records[0].z0.dim();
    let n = records.len();

    // Within-group demeaning of outputs, source goals, and instruction goals.
    let mut outputs = vec![vec![0.0; n]; dims];
    let mut sources = vec![vec![0.0; n]; dims];
    let mut instructions = vec![vec![0.0; n]; dims];
    let mut row = 0;
    let mut group_order: Vec<&str> = groups.keys().copied().collect();
    group_order.sort_unstable();
    for key in &group_order {
        let members = &groups[key];
        let m = members.len() as f64;
        for d in 0..dims {
            let mean_out: f64 = members.iter().map(|r| r.z_hat[d]).sum::<f64>() / m;
            let mean_src: f64 = members.iter().map(|r| r.z0[d]).sum::<f64>() / m;
            let mean_ins: f64 = members.iter().map(|r| r.z_star[d]).sum::<f64>() / m;
            for (k, r) in members.iter().enumerate() {
                outputs[d][row + k] = r.z_hat[d] - mean_out;
                sources[d][row + k] = r.z0[d] - mean_src;
                instructions[d][row + k] = r.z_star[d] - mean_ins;
            }
        }
        row += members.len();
    }

    let mut diagnostics = Vec::new();
    let mut residuals = vec![vec![0.0; n]; dims];
    for d in 0..dims {
        let mut columns: Vec<Vec<f64>> = Vec::with_capacity(dims + 1);
        columns.push(sources[d].clone());
        for inst in &instructions {
            columns.push(inst.clone());
        }
        let (beta, mut diags) = least_squares(&columns, &outputs[d]);
        for diag in diags.drain(..) {
            diagnostics.push(format!("dimension {d}: {diag}"));
        }
        for i in 0..n {
            let mut fitted = 0.0;
            for (c, b) in columns.iter().zip(&beta) {
                fitted += c[i] * b;
            }
            residuals[d][i] = outputs[d][i] - fitted;
        }
    }
    let degenerate_residuals =
        residuals.iter().all(|r| r.iter().all(|v| v.abs() < 1e-9));

    // One z0 row per unique source for the source-goal correlations.
    let seed_z0: Vec<&MetricRecord> = group_order.iter().map(|k| groups[k][0]).collect();
    let mut source_corr = vec![vec![None; dims]; dims];
    let mut residual_corr = vec![vec![None; dims]; dims];
    let mut difference = vec![vec![None; dims]; dims];
    for a in 0..dims {
        for b in 0..dims {
            let src_a: Vec<f64> = seed_z0.iter().map(|r| r.z0[a]).collect();
            let src_b: Vec<f64> = seed_z0.iter().map(|r| r.z0[b]).collect();
            source_corr[a][b] = spearman_rho(&src_a, &src_b);
            residual_corr[a][b] = if degenerate_residuals {
                Some(0.0)
            } else {
                spearman_rho(&residuals[a], &residuals[b])
            };
            difference[a][b] = match (residual_corr[a][b], source_corr[a][b]) {
                (Some(r), Some(s)) => Some(r - s),
                _ => None,
            };
        }
    }

    Ok(EntanglementReport {
        dims,
        source_corr,
        residual_corr,
        difference,
        degenerate_residuals,
        diagnostics,
    })
}

fn normalize_whitespace(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Builds metric records for grounded responses. When `decisions` is given,
/// only records with a grounded final status are scored; otherwise every
/// non-rejected record with a goal mapping is scored. Copy-paste status and
/// BLEU against the source text are attached here.
pub fn compute_metric_records(
    items: &[ProbeItem],
    responses: &[ResponseRecord],
    decisions: Option<&[ReviewDecision]>,
) -> Result<Vec<MetricRecord>, AnalysisError> {
    let items_by_id: HashMap<&str, &ProbeItem> =
        items.iter().map(|i| (i.id.as_str(), i)).collect();
    let grounded = decisions.map(grounded_ids);
    let mut out = Vec::new();
    for response in responses {
        if !response.selected {
            continue;
        }
        let Some(z_hat) = &response.z_hat else { continue };
        let rid = record_id(response);
        match (&grounded, &response.filter_status) {
            (Some(ok), _) if !ok.contains(&rid) => continue,
            (None, FilterStatus::Rejected { .. }) => continue,
            _ => {}
        }
        let item = items_by_id.get(response.item_id.as_str()).ok_or_else(|| {
            AnalysisError::InvalidArgument(format!("response {rid} references unknown item"))
        })?;
        let scores = SteerScores::compute(&item.z0, &item.z_star, z_hat)
            .map_err(|e| AnalysisError::InvalidArgument(e.to_string()))?;
        let binned = binned_scores(&item.z0, &item.z_star, z_hat)
            .map_err(|e| AnalysisError::InvalidArgument(e.to_string()))?;
        let rewrite = response.rewrite_text.clone().unwrap_or_default();
        let copy_paste =
            normalize_whitespace(&rewrite) == normalize_whitespace(&item.source_text);
        let bleu = sentence_bleu(&tokenize(&item.source_text), &tokenize(&rewrite));
        out.push(MetricRecord {
            record_id: rid,
            item_id: item.id.clone(),
            seed_id: item.seed_id.clone(),
            z0: item.z0.clone(),
            z_star: item.z_star.clone(),
            z_hat: z_hat.clone(),
            active: item.active.clone(),
            deltas: item.deltas.clone(),
            steering_error: scores.steering_error,
            miscalibration: scores.miscalibration,
            miscalibration_signed: scores.miscalibration_signed,
            orthogonality: scores.orthogonality,
            binned_steering_error: binned.steering_error,
            binned_miscalibration: binned.miscalibration,
            binned_orthogonality: binned.orthogonality,
            zero_request: scores.zero_request,
            zero_movement: scores.zero_movement,
            copy_paste,
            bleu,
        });
    }
    Ok(out)
}

/// Metrics file records: a header carrying the goal-space config, then one
/// record per grounded response.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MetricsFileRecord {
    Header { schema_version: u32, goal_space: GoalSpaceConfig },
    Record(Box<MetricRecord>),
}

pub fn write_metrics<W: Write>(
    mut writer: W,
    config: &GoalSpaceConfig,
    records: &[MetricRecord],
) -> Result<(), AnalysisError> {
    let header = MetricsFileRecord::Header {
        schema_version: GOALSPACE_SCHEMA_VERSION,
        goal_space: config.clone(),
    };
    writeln!(writer, "{}", serde_json::to_string(&header).map_err(|e| AnalysisError::Format(e.to_string()))?)?;
    for r in records {
        let line = serde_json::to_string(&MetricsFileRecord::Record(Box::new(r.clone())))
            .map_err(|e| AnalysisError::Format(e.to_string()))?;
        writeln!(writer, "{line}")?;
    }
    Ok(())
}

pub fn read_metrics<R: BufRead>(
    reader: R,
) -> Result<(GoalSpaceConfig, Vec<MetricRecord>), AnalysisError> {
    let mut config = None;
    let mut records = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<MetricsFileRecord>(&line)
            .map_err(|e| AnalysisError::Format(format!("line {}: {e}", i + 1)))?
        {
            MetricsFileRecord::Header { goal_space, .. } => config = Some(goal_space),
            MetricsFileRecord::Record(r) => records.push(*r),
        }
    }
    let config =
        config.ok_or_else(|| AnalysisError::Format("metrics file has no header".into()))?;
    Ok((config, records))
}

/// The full per-run analysis document.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub n_records: usize,
    pub summaries: BTreeMap<String, AggregateResult>,
    pub strata: Vec<StratifiedComparison>,
    pub copy_paste: CopyPasteStats,
    pub entanglement: Option<EntanglementReport>,
    pub zero_movement_rate: f64,
}

/// Aggregates every metric, stratifies every active dimension pair that has
/// both correlated and anti-correlated requests, and attaches copy-paste and
/// entanglement analyses.
pub fn build_report(records: &[MetricRecord]) -> Result<AnalysisReport, AnalysisError> {
    if records.is_empty() {
        return Err(AnalysisError::EmptyInput("no metric records".into()));
    }
    let mut summaries = BTreeMap::new();
    for selector in MetricSelector::ALL {
        if let Ok(result) = aggregate(records, selector) {
            summaries.insert(selector.name().to_string(), result);
        }
    }
    let dims = records[0].z0.dim();
    let mut strata = Vec::new();
    for a in 0..dims {
        for b in (a + 1)..dims {
            if let Ok(s) = stratify_correlated(records, a, b) {
                strata.push(s);
            }
        }
    }
    let zero_movement = records.iter().filter(|r| r.zero_movement).count();
    Ok(AnalysisReport {
        n_records: records.len(),
        summaries,
        strata,
        copy_paste: copy_paste_stats(records)?,
        entanglement: entanglement_residuals(records).ok(),
        zero_movement_rate: zero_movement as f64 / records.len() as f64,
    })
}

/// Writes per-pair flow CSVs (`flow_<a>_<b>_vectors.csv` and
/// `flow_<a>_<b>_grid.csv`) under `dir`.
pub fn export_flow_csv(
    dir: &std::path::Path,
    dims: &[String],
    records: &[MetricRecord],
    grid_n: usize,
) -> Result<Vec<std::path::PathBuf>, AnalysisError> {
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    for a in 0..dims.len() {
        for b in 0..dims.len() {
            if a == b {
                continue;
            }
            let field = flow_field(records, a, b, grid_n);
            let vec_path = dir.join(format!("flow_{}_{}_vectors.csv", dims[a], dims[b]));
            let mut f = std::fs::File::create(&vec_path)?;
            writeln!(f, "origin_{},origin_{},delta_{},delta_{}", dims[a], dims[b], dims[a], dims[b])?;
            for ((ox, oy), (dx, dy)) in &field.vectors {
                writeln!(f, "{ox},{oy},{dx},{dy}")?;
            }
            written.push(vec_path);
            let grid_path = dir.join(format!("flow_{}_{}_grid.csv", dims[a], dims[b]));
            let mut f = std::fs::File::create(&grid_path)?;
            writeln!(f, "x,y,mean_dx,mean_dy,weight,support")?;
            for cell in &field.cells {
                match cell.mean {
                    Some((dx, dy)) => writeln!(
                        f,
                        "{},{},{dx},{dy},{},{}",
                        cell.x, cell.y, cell.weight, cell.support
                    )?,
                    None => writeln!(f, "{},{},,,{},{}", cell.x, cell.y, cell.weight, cell.support)?,
                }
            }
            written.push(grid_path);
        }
    }
    Ok(written)
}
