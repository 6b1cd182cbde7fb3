//! Steering error, miscalibration, and orthogonality over goal vectors, on
//! both raw and binned deltas, plus the random baseline and rank agreement.
//!
//! Steering error is the Euclidean distance between the target and achieved
//! goal vectors. Its residual decomposes onto the requested movement
//! direction: the parallel magnitude normalized by requested movement is
//! miscalibration, the orthogonal magnitude normalized by observed movement
//! is orthogonality.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::goalspace::{discretize_delta, quantile, GoalVector};

#[derive(Debug, Error)]
pub enum SteerMetricError {
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("zero request: target equals source")]
    ZeroRequest,
    #[error("Kendall tau undefined: {0}")]
    UndefinedTau(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

fn check_dims(a: &[f64], b: &[f64]) -> Result<(), SteerMetricError> {
    if a.len() != b.len() {
        return Err(SteerMetricError::DimensionMismatch(a.len(), b.len()));
    }
    Ok(())
}

fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Euclidean distance between target and achieved goal vectors.
pub fn steering_error(z_star: &GoalVector, z_hat: &GoalVector) -> Result<f64, SteerMetricError> {
    check_dims(z_star.as_slice(), z_hat.as_slice())?;
    Ok(norm(&sub(z_star.as_slice(), z_hat.as_slice())))
}

/// Unnormalized residual decomposition of `z* - zhat` onto the requested
/// movement direction `z* - z0`: (signed parallel magnitude, orthogonal
/// magnitude). Errors when the request is zero.
pub fn projection_components(
    z0: &GoalVector,
    z_star: &GoalVector,
    z_hat: &GoalVector,
) -> Result<(f64, f64), SteerMetricError> {
    check_dims(z0.as_slice(), z_star.as_slice())?;
    check_dims(z0.as_slice(), z_hat.as_slice())?;
    let request = sub(z_star.as_slice(), z0.as_slice());
    let request_norm = norm(&request);
    if request_norm == 0.0 {
        return Err(SteerMetricError::ZeroRequest);
    }
    let residual = sub(z_star.as_slice(), z_hat.as_slice());
    let parallel = dot(&residual, &request) / request_norm;
    let ortho_sq = (dot(&residual, &residual) - parallel * parallel).max(0.0);
    Ok((parallel, ortho_sq.sqrt()))
}

/// Magnitude of the residual's component along the requested direction,
/// normalized by the requested movement.
pub fn miscalibration(
    z0: &GoalVector,
    z_star: &GoalVector,
    z_hat: &GoalVector,
) -> Result<f64, SteerMetricError> {
    miscalibration_signed(z0, z_star, z_hat).map(f64::abs)
}

/// Signed diagnostic variant: positive means undershoot (movement fell short
/// of the target along the requested direction), negative means overshoot.
pub fn miscalibration_signed(
    z0: &GoalVector,
    z_star: &GoalVector,
    z_hat: &GoalVector,
) -> Result<f64, SteerMetricError> {
    let (parallel, _) = projection_components(z0, z_star, z_hat)?;
    let request_norm = norm(&sub(z_star.as_slice(), z0.as_slice()));
    Ok(parallel / request_norm)
}

/// Magnitude of the residual's component orthogonal to the requested
/// direction, normalized by observed movement. Returns 0 when the output
/// did not move; the zero-movement case carries a flag in [`SteerScores`].
pub fn orthogonality(
    z0: &GoalVector,
    z_star: &GoalVector,
    z_hat: &GoalVector,
) -> Result<f64, SteerMetricError> {
    let (_, ortho) = projection_components(z0, z_star, z_hat)?;
    let movement = norm(&sub(z_hat.as_slice(), z0.as_slice()));
    if movement == 0.0 {
        return Ok(0.0);
    }
    Ok(ortho / movement)
}

/// The three metrics for one (source, target, output) triple, with the
/// degenerate cases flagged instead of silently folded into aggregates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SteerScores {
    pub steering_error: f64,
    /// Absent iff the request was zero.
    pub miscalibration: Option<f64>,
    pub miscalibration_signed: Option<f64>,
    /// Absent iff the request was zero; 0 by convention on zero movement.
    pub orthogonality: Option<f64>,
    pub zero_request: bool,
    pub zero_movement: bool,
}

impl SteerScores {
    pub fn compute(
        z0: &GoalVector,
        z_star: &GoalVector,
        z_hat: &GoalVector,
    ) -> Result<SteerScores, SteerMetricError> {
        check_dims(z0.as_slice(), z_star.as_slice())?;
        check_dims(z0.as_slice(), z_hat.as_slice())?;
        let se = steering_error(z_star, z_hat)?;
        let zero_request = norm(&sub(z_star.as_slice(), z0.as_slice())) == 0.0;
        let zero_movement = norm(&sub(z_hat.as_slice(), z0.as_slice())) == 0.0;
        if zero_request {
            return Ok(SteerScores {
                steering_error: se,
                miscalibration: None,
                miscalibration_signed: None,
                orthogonality: None,
                zero_request,
                zero_movement,
            });
        }
        Ok(SteerScores {
            steering_error: se,
            miscalibration: Some(miscalibration(z0, z_star, z_hat)?),
            miscalibration_signed: Some(miscalibration_signed(z0, z_star, z_hat)?),
            orthogonality: Some(orthogonality(z0, z_star, z_hat)?),
            zero_request,
            zero_movement,
        })
    }
}

/// Metrics recomputed on binned deltas: both `z* - z0` and `zhat - z0` are
/// mapped through their bin representatives, then scored against the origin.
pub fn binned_scores(
    z0: &GoalVector,
    z_star: &GoalVector,
    z_hat: &GoalVector,
) -> Result<SteerScores, SteerMetricError> {
    check_dims(z0.as_slice(), z_star.as_slice())?;
    check_dims(z0.as_slice(), z_hat.as_slice())?;
    let bin = |v: &GoalVector| -> Result<GoalVector, SteerMetricError> {
        v.as_slice()
            .iter()
            .zip(z0.as_slice())
            .map(|(x, o)| {
                discretize_delta(x - o)
                    .map(|b| b.representative())
                    .map_err(|e| SteerMetricError::InvalidArgument(e.to_string()))
            })
            .collect::<Result<Vec<f64>, _>>()
            .map(GoalVector)
    };
    let origin = GoalVector(vec![0.0; z0.dim()]);
    SteerScores::compute(&origin, &bin(z_star)?, &bin(z_hat)?)
}

/// One row of the metrics output: scores plus the probe context analysis
/// needs (deltas, active mask, copy-paste status, BLEU to the source).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub record_id: String,
    pub item_id: String,
    pub seed_id: String,
    pub z0: GoalVector,
    pub z_star: GoalVector,
    pub z_hat: GoalVector,
    pub active: Vec<bool>,
    pub deltas: Vec<f64>,
    pub steering_error: f64,
    pub miscalibration: Option<f64>,
    pub miscalibration_signed: Option<f64>,
    pub orthogonality: Option<f64>,
    pub binned_steering_error: f64,
    pub binned_miscalibration: Option<f64>,
    pub binned_orthogonality: Option<f64>,
    pub zero_request: bool,
    pub zero_movement: bool,
    pub copy_paste: bool,
    pub bleu: f64,
}

/// Median steering error of a uniform-random responder: for each target,
/// `trials_per_item` outputs are drawn uniformly from the unit hypercube.
pub fn random_baseline<R: Rng>(
    z_stars: &[GoalVector],
    trials_per_item: usize,
    rng: &mut R,
) -> Result<f64, SteerMetricError> {
    if z_stars.is_empty() || trials_per_item == 0 {
        return Err(SteerMetricError::InvalidArgument(
            "random_baseline needs a non-empty probe and trials >= 1".into(),
        ));
    }
    let mut errors = Vec::with_capacity(z_stars.len() * trials_per_item);
    for z_star in z_stars {
        for _ in 0..trials_per_item {
            let sq: f64 = z_star
                .as_slice()
                .iter()
                .map(|&t| {
                    let u: f64 = rng.gen();
                    (t - u) * (t - u)
                })
                .sum();
            errors.push(sq.sqrt());
        }
    }
    Ok(quantile(&errors, 0.5))
}

/// Kendall's tau-b over (predicted, actual) pairs, with the pairwise
/// agreement rate `(tau + 1) / 2`.
pub fn kendall_tau(pairs: &[(f64, f64)]) -> Result<(f64, f64), SteerMetricError> {
    let n = pairs.len();
    if n < 2 {
        return Err(SteerMetricError::InvalidArgument("kendall_tau needs >= 2 pairs".into()));
    }
    let mut concordant = 0i64;
    let mut discordant = 0i64;
    let mut ties_x = 0i64;
    let mut ties_y = 0i64;
    for i in 0..n {
        for j in (i + 1)..n {
            let dx = pairs[i].0 - pairs[j].0;
            let dy = pairs[i].1 - pairs[j].1;
            if dx == 0.0 && dy == 0.0 {
                ties_x += 1;
                ties_y += 1;
            } else if dx == 0.0 {
                ties_x += 1;
            } else if dy == 0.0 {
                ties_y += 1;
            } else if (dx > 0.0) == (dy > 0.0) {
                concordant += 1;
            } else {
                discordant += 1;
            }
        }
    }
    let n0 = (n * (n - 1) / 2) as i64;
    let denom_x = n0 - ties_x;
    let denom_y = n0 - ties_y;
    if denom_x == 0 || denom_y == 0 {
        return Err(SteerMetricError::UndefinedTau("all pairs tied".into()));
    }
    let tau = (concordant - discordant) as f64 / ((denom_x as f64) * (denom_y as f64)).sqrt();
    Ok((tau, (tau + 1.0) / 2.0))
}
