//! Core library for goal-space steerability evaluation.
//!
//! Texts and rewriting goals live in a shared goal-space `[0,1]^|G|` whose
//! axes are deterministic text measurements (reading difficulty, formality,
//! lexical diversity, length). The pipeline:
//!
//! - [`textmetrics`]: tokenization, syllables, POS tagging, and the
//!   text-to-scalar metric functions, plus sentence BLEU;
//! - [`goalspace`]: normalization bounds, the goal-space mapping, and delta
//!   discretization;
//! - [`probegen`]: seed ingestion, density-ratio sampling weights, and
//!   goal-uniform probe construction;
//! - [`promptgen`]: rendering probe items into rewriting instructions under
//!   each prompting strategy;
//! - [`llmrun`]: chat-endpoint drivers, decoding configs, post-processing,
//!   best-of-N selection, and the resumable response journal;
//! - [`judge`]: groundedness judging with human-in-the-loop review and the
//!   goal-dimension validity judge;
//! - [`steermetrics`]: steering error, miscalibration, orthogonality (raw
//!   and binned), the random baseline, and Kendall rank agreement;
//! - [`analysis`]: aggregation, stratification, rank tests, flow fields,
//!   copy-paste statistics, and entanglement residuals;
//! - [`rlmath`]: value-level fine-tuning objective math over supplied
//!   log-probabilities.

pub mod analysis;
pub mod goalspace;
pub mod judge;
pub mod llmrun;
pub mod probegen;
pub mod promptgen;
pub mod rlmath;
pub mod steermetrics;
pub mod textmetrics;

pub use analysis::{AnalysisReport, SummaryStats};
pub use goalspace::{GoalMapper, GoalSpaceConfig, GoalVector};
pub use llmrun::{DecodingConfig, ResponseRecord};
pub use probegen::{ProbeItem, ProbeSpec, SeedText};
pub use promptgen::PromptStrategy;
pub use rlmath::{RlHyperparams, RolloutGroup};
pub use steermetrics::{MetricRecord, SteerScores};
pub use textmetrics::TokenizedText;
