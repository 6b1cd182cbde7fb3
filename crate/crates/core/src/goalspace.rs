//! Goal-space `[0,1]^|G|`: normalization of raw metric scales, the mapping
//! from text to goal vectors, and delta discretization for binned metrics.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::textmetrics::{tokenize, MetricError, MetricId};

/// Version tag written into serialized configs and probe headers.
pub const GOALSPACE_SCHEMA_VERSION: u32 = 1;

pub const DIM_READING_DIFFICULTY: &str = "reading_difficulty";
pub const DIM_FORMALITY: &str = "formality";
pub const DIM_TEXTUAL_DIVERSITY: &str = "textual_diversity";
pub const DIM_TEXT_LENGTH: &str = "text_length";

#[derive(Debug, Error)]
pub enum GoalSpaceError {
    #[error("degenerate dimension {0}: all raw values equal")]
    DegenerateDimension(String),
    #[error("unknown dimension {0}")]
    UnknownDimension(String),
    #[error("delta {0} outside [-1, 1]")]
    DeltaOutOfRange(f64),
    #[error("dimension {dimension}: needs >= {needed} samples, got {got}")]
    InsufficientSamples { dimension: String, needed: usize, got: usize },
    #[error("dimension {dimension}: {source}")]
    Metric { dimension: String, source: MetricError },
    #[error("config: {0}")]
    Config(String),
}

/// A point in goal-space. Components are kept in `[0,1]` by construction:
/// [`GoalSpaceConfig::normalize`] clips, and probe targets are feasibility
/// clipped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct GoalVector(pub Vec<f64>);

impl GoalVector {
    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

impl std::ops::Index<usize> for GoalVector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// One registered goal dimension: its metric and the raw-scale values that
/// map to 0 and 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DimensionSpec {
    pub id: String,
    pub metric: MetricId,
    pub raw_min: f64,
    pub raw_max: f64,
}

/// Registry of goal dimensions with per-dimension normalization bounds,
/// immutable once fitted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoalSpaceConfig {
    pub schema_version: u32,
    pub dimensions: Vec<DimensionSpec>,
}

/// Raw samples for one dimension, used to fit normalization bounds.
#[derive(Debug, Clone)]
pub struct DimensionSamples {
    pub id: String,
    pub metric: MetricId,
    pub values: Vec<f64>,
}

/// Linear-interpolation quantile over unsorted data (the estimator used for
/// both normalization bounds and summary statistics).
pub fn quantile(values: &[f64], q: f64) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    quantile_sorted(&sorted, q)
}

pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty slice");
    let h = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    if lo == hi {
        sorted[lo]
    } else {
        sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
    }
}

/// Minimum per-dimension sample count for fitting, so the 2.5% and 97.5%
/// quantiles land on distinct order statistics.
pub const MIN_FIT_SAMPLES: usize = 40;

/// Fits normalization bounds as the empirical 2.5th/97.5th quantiles of each
/// dimension's raw values.
pub fn fit_normalization(samples: &[DimensionSamples]) -> Result<GoalSpaceConfig, GoalSpaceError> {
    let mut dimensions = Vec::with_capacity(samples.len());
    for dim in samples {
        if dim.values.len() < MIN_FIT_SAMPLES {
            return Err(GoalSpaceError::InsufficientSamples {
                dimension: dim.id.clone(),
                needed: MIN_FIT_SAMPLES,
                got: dim.values.len(),
            });
        }
        let raw_min = quantile(&dim.values, 0.025);
        let raw_max = quantile(&dim.values, 0.975);
        if raw_min >= raw_max {
            return Err(GoalSpaceError::DegenerateDimension(dim.id.clone()));
        }
        dimensions.push(DimensionSpec { id: dim.id.clone(), metric: dim.metric, raw_min, raw_max });
    }
    let config = GoalSpaceConfig { schema_version: GOALSPACE_SCHEMA_VERSION, dimensions };
    config.validate()?;
    Ok(config)
}

impl GoalSpaceConfig {
    /// The four standard dimensions with the bundled reference bounds.
    pub fn standard() -> GoalSpaceConfig {
        GoalSpaceConfig {
            schema_version: GOALSPACE_SCHEMA_VERSION,
            dimensions: vec![
                DimensionSpec {
                    id: DIM_READING_DIFFICULTY.into(),
                    metric: MetricId::FleschKincaid,
                    raw_min: 2.8,
                    raw_max: 12.9,
                },
                DimensionSpec {
                    id: DIM_FORMALITY.into(),
                    metric: MetricId::HeylighenDewaele,
                    raw_min: 40.4,
                    raw_max: 69.1,
                },
                DimensionSpec {
                    id: DIM_TEXTUAL_DIVERSITY.into(),
                    metric: MetricId::Mtld,
                    raw_min: 44.8,
                    raw_max: 128.5,
                },
                DimensionSpec {
                    id: DIM_TEXT_LENGTH.into(),
                    metric: MetricId::WordCount,
                    raw_min: 78.0,
                    raw_max: 1509.0,
                },
            ],
        }
    }

    pub fn dim(&self) -> usize {
        self.dimensions.len()
    }

    pub fn dimension_ids(&self) -> Vec<&str> {
        self.dimensions.iter().map(|d| d.id.as_str()).collect()
    }

    pub fn index_of(&self, dimension: &str) -> Result<usize, GoalSpaceError> {
        self.dimensions
            .iter()
            .position(|d| d.id == dimension)
            .ok_or_else(|| GoalSpaceError::UnknownDimension(dimension.to_string()))
    }

    pub fn validate(&self) -> Result<(), GoalSpaceError> {
        if self.schema_version != GOALSPACE_SCHEMA_VERSION {
            return Err(GoalSpaceError::Config(format!(
                "unsupported schema_version {} (expected {GOALSPACE_SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        let mut seen = std::collections::HashSet::new();
        for d in &self.dimensions {
            if !seen.insert(d.id.as_str()) {
                return Err(GoalSpaceError::Config(format!("duplicate dimension id {}", d.id)));
            }
            let ordered = d.raw_min.is_finite() && d.raw_max.is_finite() && d.raw_min < d.raw_max;
            if !ordered {
                return Err(GoalSpaceError::DegenerateDimension(d.id.clone()));
            }
        }
        Ok(())
    }

    /// Linear rescale of a raw value onto `[0,1]`, clipping out-of-range values.
    pub fn normalize(&self, dimension: &str, raw: f64) -> Result<f64, GoalSpaceError> {
        let i = self.index_of(dimension)?;
        Ok(self.normalize_index(i, raw))
    }

    pub fn normalize_index(&self, index: usize, raw: f64) -> f64 {
        let d = &self.dimensions[index];
        ((raw - d.raw_min) / (d.raw_max - d.raw_min)).clamp(0.0, 1.0)
    }

    /// Computes every registered metric on `text` and normalizes component-wise.
    pub fn map_to_goalspace(&self, text: &str) -> Result<GoalVector, GoalSpaceError> {
        let tokens = tokenize(text);
        let mut out = Vec::with_capacity(self.dimensions.len());
        for (i, d) in self.dimensions.iter().enumerate() {
            let raw = d
                .metric
                .compute(&tokens)
                .map_err(|source| GoalSpaceError::Metric { dimension: d.id.clone(), source })?;
            out.push(self.normalize_index(i, raw.value));
        }
        Ok(GoalVector(out))
    }

    /// Raw (unnormalized) metric values per dimension.
    pub fn raw_mappings(&self, text: &str) -> Result<Vec<f64>, GoalSpaceError> {
        self.raw_mappings_tokens(&tokenize(text))
    }

    /// Raw metric values over an already-tokenized text.
    pub fn raw_mappings_tokens(
        &self,
        tokens: &crate::textmetrics::TokenizedText,
    ) -> Result<Vec<f64>, GoalSpaceError> {
        self.dimensions
            .iter()
            .map(|d| {
                d.metric
                    .compute(tokens)
                    .map(|r| r.value)
                    .map_err(|source| GoalSpaceError::Metric { dimension: d.id.clone(), source })
            })
            .collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn from_json(json: &str) -> Result<GoalSpaceConfig, GoalSpaceError> {
        let config: GoalSpaceConfig =
            serde_json::from_str(json).map_err(|e| GoalSpaceError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }
}

/// Anything that maps text into goal-space. The production mapper is a
/// [`GoalSpaceConfig`]; test harnesses substitute scripted mappers.
pub trait GoalMapper: Sync {
    fn map_text(&self, text: &str) -> Result<GoalVector, GoalSpaceError>;
    fn dim(&self) -> usize;
}

impl GoalMapper for GoalSpaceConfig {
    fn map_text(&self, text: &str) -> Result<GoalVector, GoalSpaceError> {
        self.map_to_goalspace(text)
    }

    fn dim(&self) -> usize {
        self.dimensions.len()
    }
}

/// Signed delta bin with cut points at 0, ±0.2, and ±0.5. "Slight" is
/// `|d| < 0.2` and "much" is `|d| > 0.5`, mirroring the prompt modifiers, so
/// both boundary values fall in the moderate bin.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeltaBin {
    NegMuch,
    NegModerate,
    NegSlight,
    Zero,
    PosSlight,
    PosModerate,
    PosMuch,
}

impl DeltaBin {
    /// Signed bin midpoint used when computing metrics on binned vectors.
    pub fn representative(self) -> f64 {
        match self {
            DeltaBin::NegMuch => -0.75,
            DeltaBin::NegModerate => -0.35,
            DeltaBin::NegSlight => -0.1,
            DeltaBin::Zero => 0.0,
            DeltaBin::PosSlight => 0.1,
            DeltaBin::PosModerate => 0.35,
            DeltaBin::PosMuch => 0.75,
        }
    }

    pub fn mirror(self) -> DeltaBin {
        match self {
            DeltaBin::NegMuch => DeltaBin::PosMuch,
            DeltaBin::NegModerate => DeltaBin::PosModerate,
            DeltaBin::NegSlight => DeltaBin::PosSlight,
            DeltaBin::Zero => DeltaBin::Zero,
            DeltaBin::PosSlight => DeltaBin::NegSlight,
            DeltaBin::PosModerate => DeltaBin::NegModerate,
            DeltaBin::PosMuch => DeltaBin::NegMuch,
        }
    }
}

/// Maps a signed goal-space delta in `[-1, 1]` to its bin.
pub fn discretize_delta(delta: f64) -> Result<DeltaBin, GoalSpaceError> {
    let mag = delta.abs();
    if mag > 1.0 || !delta.is_finite() {
        return Err(GoalSpaceError::DeltaOutOfRange(delta));
    }
    if mag == 0.0 {
        return Ok(DeltaBin::Zero);
    }
    let positive = delta > 0.0;
    let bin = if mag < 0.2 {
        if positive { DeltaBin::PosSlight } else { DeltaBin::NegSlight }
    } else if mag <= 0.5 {
        if positive { DeltaBin::PosModerate } else { DeltaBin::NegModerate }
    } else {
        if positive { DeltaBin::PosMuch } else { DeltaBin::NegMuch }
    };
    Ok(bin)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standard_bounds_map_endpoints_to_unit_interval() {
        let c = GoalSpaceConfig::standard();
        assert_eq!(c.normalize(DIM_READING_DIFFICULTY, 2.8).unwrap(), 0.0);
        assert_eq!(c.normalize(DIM_READING_DIFFICULTY, 12.9).unwrap(), 1.0);
        assert_eq!(c.normalize(DIM_FORMALITY, 40.4).unwrap(), 0.0);
        assert_eq!(c.normalize(DIM_FORMALITY, 69.1).unwrap(), 1.0);
    }

    #[test]
    fn normalize_midpoint_and_clipping() {
        let c = GoalSpaceConfig::standard();
        let mid = c.normalize(DIM_READING_DIFFICULTY, 7.85).unwrap();
        assert!((mid - 0.5).abs() < 1e-12);
        assert_eq!(c.normalize(DIM_READING_DIFFICULTY, 15.0).unwrap(), 1.0);
        assert_eq!(c.normalize(DIM_READING_DIFFICULTY, -4.0).unwrap(), 0.0);
    }

    #[test]
    fn unknown_dimension_is_an_error() {
        let c = GoalSpaceConfig::standard();
        assert!(matches!(c.normalize("nope", 1.0), Err(GoalSpaceError::UnknownDimension(_))));
    }

    #[test]
    fn fit_uses_linear_interpolation_quantiles() {
        let values: Vec<f64> = (0..40).map(|i| i as f64).collect();
        let samples = vec![DimensionSamples {
            id: "x".into(),
            metric: MetricId::WordCount,
            values,
        }];
        let c = fit_normalization(&samples).unwrap();
        assert!((c.dimensions[0].raw_min - 0.975).abs() < 1e-12);
        assert!((c.dimensions[0].raw_max - 38.025).abs() < 1e-12);
    }

    #[test]
    fn fit_rejects_constant_dimension() {
        let samples = vec![DimensionSamples {
            id: "x".into(),
            metric: MetricId::WordCount,
            values: vec![5.0; 60],
        }];
        assert!(matches!(fit_normalization(&samples), Err(GoalSpaceError::DegenerateDimension(_))));
    }

    #[test]
    fn fit_rejects_small_samples() {
        let samples = vec![DimensionSamples {
            id: "x".into(),
            metric: MetricId::WordCount,
            values: (0..39).map(|i| i as f64).collect(),
        }];
        assert!(matches!(fit_normalization(&samples), Err(GoalSpaceError::InsufficientSamples { .. })));
    }

    #[test]
    fn fit_quantiles_bracket_at_most_5_percent_outside() {
        let values: Vec<f64> = (0..200).map(|i| (i as f64 * 37.0) % 100.0).collect();
        let samples = vec![DimensionSamples { id: "x".into(), metric: MetricId::WordCount, values: values.clone() }];
        let c = fit_normalization(&samples).unwrap();
        let d = &c.dimensions[0];
        let outside = values.iter().filter(|&&v| v < d.raw_min || v > d.raw_max).count();
        assert!(outside as f64 <= 0.05 * values.len() as f64 + 1.0);
    }

    #[test]
    fn normalize_is_monotone() {
        let c = GoalSpaceConfig::standard();
        let mut prev = -1.0;
        for i in 0..200 {
            let raw = -10.0 + i as f64 * 0.2;
            let z = c.normalize(DIM_READING_DIFFICULTY, raw).unwrap();
            assert!(z >= prev);
            prev = z;
        }
    }

    #[test]
    fn map_to_goalspace_is_deterministic() {
        let c = GoalSpaceConfig::standard();
        let text = words_fixture();
        let a = c.map_to_goalspace(&text).unwrap();
        let b = c.map_to_goalspace(&text).unwrap();
        assert_eq!(a, b);
        for v in a.as_slice() {
            assert!((0.0..=1.0).contains(v));
        }
    }

    #[test]
    fn map_to_goalspace_tags_failing_dimension() {
        let c = GoalSpaceConfig::standard();
        // Below the MTLD validity floor.
        let err = c.map_to_goalspace("Too short.").unwrap_err();
        match err {
            GoalSpaceError::Metric { dimension, .. } => assert_eq!(dimension, DIM_TEXTUAL_DIVERSITY),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn text_at_raw_midpoints_maps_to_half() {
        // Bounds constructed around the text's own raw values, so every raw
        // value sits exactly at its dimension midpoint.
        let text = words_fixture();
        let mut config = GoalSpaceConfig::standard();
        let raw = config.raw_mappings(&text).unwrap();
        for (d, r) in config.dimensions.iter_mut().zip(&raw) {
            d.raw_min = r - 2.0;
            d.raw_max = r + 2.0;
        }
        let z = config.map_to_goalspace(&text).unwrap();
        for v in z.as_slice() {
            assert!((v - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn text_below_all_minima_maps_to_zero_vector() {
        let text = words_fixture();
        let mut config = GoalSpaceConfig::standard();
        let raw = config.raw_mappings(&text).unwrap();
        for (d, r) in config.dimensions.iter_mut().zip(&raw) {
            d.raw_min = r + 5.0;
            d.raw_max = r + 10.0;
        }
        let z = config.map_to_goalspace(&text).unwrap();
        assert!(z.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn discretize_examples() {
        assert_eq!(discretize_delta(0.15).unwrap(), DeltaBin::PosSlight);
        assert_eq!(discretize_delta(0.0).unwrap(), DeltaBin::Zero);
        assert_eq!(discretize_delta(-0.6).unwrap(), DeltaBin::NegMuch);
        assert_eq!(discretize_delta(0.35).unwrap(), DeltaBin::PosModerate);
        // Boundary convention: 0.2 and 0.5 are moderate.
        assert_eq!(discretize_delta(0.2).unwrap(), DeltaBin::PosModerate);
        assert_eq!(discretize_delta(0.5).unwrap(), DeltaBin::PosModerate);
        assert_eq!(discretize_delta(-0.2).unwrap(), DeltaBin::NegModerate);
        assert!(matches!(discretize_delta(1.2), Err(GoalSpaceError::DeltaOutOfRange(_))));
    }

    #[test]
    fn discretize_is_odd() {
        for i in 0..=100 {
            let d = i as f64 / 100.0;
            let pos = discretize_delta(d).unwrap();
            let neg = discretize_delta(-d).unwrap();
            assert_eq!(pos.mirror(), neg);
            assert!((pos.representative() + neg.representative()).abs() < 1e-15);
        }
    }

    #[test]
    fn representatives_fall_inside_their_bin() {
        for bin in [
            DeltaBin::NegMuch,
            DeltaBin::NegModerate,
            DeltaBin::NegSlight,
            DeltaBin::Zero,
            DeltaBin::PosSlight,
            DeltaBin::PosModerate,
            DeltaBin::PosMuch,
        ] {
            assert_eq!(discretize_delta(bin.representative()).unwrap(), bin);
        }
    }

    #[test]
    fn config_roundtrips_through_json() {
        let c = GoalSpaceConfig::standard();
        let json = c.to_json();
        let back = GoalSpaceConfig::from_json(&json).unwrap();
        assert_eq!(c, back);
    }

    #[test]
    fn config_rejects_bad_version_and_duplicates() {
        let mut c = GoalSpaceConfig::standard();
        c.schema_version = 99;
        assert!(GoalSpaceConfig::from_json(&serde_json::to_string(&c).unwrap()).is_err());
        let mut c = GoalSpaceConfig::standard();
        c.dimensions[1].id = c.dimensions[0].id.clone();
        assert!(c.validate().is_err());
    }

    fn words_fixture() -> String {
        let mut words = Vec::new();
        for i in 0..60 {
            words.push(
                ["cat", "dog", "house", "river", "story", "summer", "voice", "market"][i % 8],
            );
        }
        format!("{}.", words.join(" "))
    }
}
