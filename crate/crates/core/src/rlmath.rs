//! Value-level RL objective math: sample weights, leave-one-out advantages,
//! rejection sampling, the margin regularizer, and the full per-token
//! normalized objective over externally supplied log-probabilities.
//!
//! Everything here evaluates objective values; no gradients or parameter
//! updates are involved.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::goalspace::GoalVector;
use crate::steermetrics::{self, SteerMetricError};

#[derive(Debug, Error)]
pub enum RlMathError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Metric(#[from] SteerMetricError),
}

/// Reward over a (source, target, output) triple. The full reward is the
/// negative steering error; the ablated variants isolate one component.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardKind {
    SteeringError,
    MiscalibrationOnly,
    OrthogonalityOnly,
}

impl RewardKind {
    pub fn reward(
        self,
        z0: &GoalVector,
        z_star: &GoalVector,
        z_hat: &GoalVector,
    ) -> Result<f64, RlMathError> {
        Ok(match self {
            RewardKind::SteeringError => -steermetrics::steering_error(z_star, z_hat)?,
            RewardKind::MiscalibrationOnly => -steermetrics::miscalibration(z0, z_star, z_hat)?,
            RewardKind::OrthogonalityOnly => -steermetrics::orthogonality(z0, z_star, z_hat)?,
        })
    }
}

/// One prompt's rollouts: per-completion rewards and per-token
/// log-probabilities under the current and reference policies.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RolloutGroup {
    pub rewards: Vec<f64>,
    pub token_logprobs_policy: Vec<Vec<f64>>,
    pub token_logprobs_ref: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub z0: Option<GoalVector>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub z_star: Option<GoalVector>,
}

impl RolloutGroup {
    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    pub fn validate(&self) -> Result<(), RlMathError> {
        let n = self.rewards.len();
        if n < 2 {
            return Err(RlMathError::InvalidArgument(format!("group size {n} < 2")));
        }
        if self.token_logprobs_policy.len() != n || self.token_logprobs_ref.len() != n {
            return Err(RlMathError::InvalidArgument(
                "log-probability arrays must match the reward count".into(),
            ));
        }
        for i in 0..n {
            let p = &self.token_logprobs_policy[i];
            let r = &self.token_logprobs_ref[i];
            if p.is_empty() || p.len() != r.len() {
                return Err(RlMathError::InvalidArgument(format!(
                    "completion {i}: token arrays empty or mismatched ({} vs {})",
                    p.len(),
                    r.len()
                )));
            }
            if p.iter().chain(r.iter()).any(|lp| *lp > 0.0 || !lp.is_finite()) {
                return Err(RlMathError::InvalidArgument(format!(
                    "completion {i}: log-probabilities must be finite and <= 0"
                )));
            }
        }
        Ok(())
    }

    /// Sequence log-ratio `sum_t(log pi_t - log piref_t)` for completion `i`.
    pub fn sequence_logratio(&self, i: usize) -> f64 {
        self.token_logprobs_policy[i]
            .iter()
            .zip(&self.token_logprobs_ref[i])
            .map(|(p, r)| p - r)
            .sum()
    }
}

/// Objective hyperparameters.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct RlHyperparams {
    /// KL coefficient.
    pub beta: f64,
    /// Margin-regularizer weight.
    pub lambda_tau: f64,
    /// Margin scale on reward differences.
    pub tau: f64,
    /// Rejection sample size (even, between 2 and the group size).
    pub k: usize,
}

impl RlHyperparams {
    pub fn validate(&self, group_size: usize) -> Result<(), RlMathError> {
        if self.beta < 0.0 || self.lambda_tau < 0.0 {
            return Err(RlMathError::InvalidArgument("beta and lambda_tau must be >= 0".into()));
        }
        if self.tau <= 0.0 {
            return Err(RlMathError::InvalidArgument("tau must be > 0".into()));
        }
        if !self.k.is_multiple_of(2) || self.k < 2 || self.k > group_size {
            return Err(RlMathError::InvalidArgument(format!(
                "k = {} must be even and within [2, {group_size}]",
                self.k
            )));
        }
        Ok(())
    }
}

impl Default for RlHyperparams {
    /// Reference training configuration: beta 0.01, lambda 1, tau 1, K 16.
    fn default() -> Self {
        RlHyperparams { beta: 0.01, lambda_tau: 1.0, tau: 1.0, k: 16 }
    }
}

/// Density-ratio sample weight `(1 - p) / p` for a source goal vector,
/// shared with probe generation: the same classifier that reweights seed
/// sampling reweights the training objective.
pub fn sample_weight(z0: &GoalVector, weights_model: &crate::probegen::SamplingWeights) -> f64 {
    weights_model.weight_for(z0)
}

/// Leave-one-out advantages: `(n / (n - 1)) * (r_i - mean(r))`.
pub fn loo_advantage(rewards: &[f64]) -> Result<Vec<f64>, RlMathError> {
    let n = rewards.len();
    if n < 2 {
        return Err(RlMathError::InvalidArgument(format!("loo_advantage needs >= 2 rewards, got {n}")));
    }
    let mean = rewards.iter().sum::<f64>() / n as f64;
    let scale = n as f64 / (n as f64 - 1.0);
    Ok(rewards.iter().map(|r| scale * (r - mean)).collect())
}

/// Indices of the K/2 highest- and K/2 lowest-reward completions. Ties keep
/// completion-index order, so the result is deterministic.
pub fn rejection_sample(rewards: &[f64], k: usize) -> Result<Vec<usize>, RlMathError> {
    let n = rewards.len();
    if !k.is_multiple_of(2) || k == 0 || k > n {
        return Err(RlMathError::InvalidArgument(format!(
            "rejection_sample: k = {k} must be even, positive, and <= {n}"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    // Stable descending sort by reward; equal rewards keep index order.
    order.sort_by(|&a, &b| rewards[b].partial_cmp(&rewards[a]).unwrap());
    let mut selected: Vec<usize> = order[..k / 2].to_vec();
    selected.extend_from_slice(&order[n - k / 2..]);
    selected.sort_unstable();
    selected.dedup();
    Ok(selected)
}

/// Margin between the implicit-reward gap and the true-reward gap:
/// `(logratio_j - logratio_k) - (r_j - r_k) / tau`.
pub fn ipo_margin(logratio_j: f64, logratio_k: f64, r_j: f64, r_k: f64, tau: f64) -> f64 {
    (logratio_j - logratio_k) - (r_j - r_k) / tau
}

/// Decomposed objective value for one group.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveValue {
    /// Per-token normalized sum of ratio-weighted advantages.
    pub policy_term: f64,
    /// Per-token normalized `beta`-weighted KL estimate.
    pub kl_term: f64,
    /// `lambda_tau`-weighted sum of squared margins over ordered pairs.
    pub regularizer: f64,
    pub sample_weight: f64,
    pub total: f64,
}

/// Value of the margin-augmented leave-one-out objective for one group.
///
/// Advantages are computed over the full group; the policy and KL sums run
/// over the retained set `selected`, normalized by the retained token count.
/// The regularizer sums squared margins over all ordered pairs within
/// `selected` using unnormalized sequence log-ratios. The KL estimate is the
/// per-token log-ratio sum.
pub fn maloop_objective(
    group: &RolloutGroup,
    selected: &[usize],
    hparams: &RlHyperparams,
    sample_weight: f64,
) -> Result<ObjectiveValue, RlMathError> {
    group.validate()?;
    hparams.validate(group.len())?;
    if selected.is_empty() || selected.iter().any(|&i| i >= group.len()) {
        return Err(RlMathError::InvalidArgument("selected set empty or out of range".into()));
    }
    let advantages = loo_advantage(&group.rewards)?;

    let token_total: usize = selected.iter().map(|&i| group.token_logprobs_policy[i].len()).sum();
    let mut policy_sum = 0.0;
    let mut kl_sum = 0.0;
    for &i in selected {
        let ratio_sum: f64 = group.token_logprobs_policy[i]
            .iter()
            .zip(&group.token_logprobs_ref[i])
            .map(|(p, r)| (p - r).exp())
            .sum();
        policy_sum += ratio_sum * advantages[i];
        kl_sum += group.sequence_logratio(i);
    }
    let policy_term = policy_sum / token_total as f64;
    let kl_term = hparams.beta * kl_sum / token_total as f64;

    let mut margin_sum = 0.0;
    for &j in selected {
        for &k in selected {
            let d = ipo_margin(
                group.sequence_logratio(j),
                group.sequence_logratio(k),
                group.rewards[j],
                group.rewards[k],
                hparams.tau,
            );
            margin_sum += d * d;
        }
    }
    let regularizer = hparams.lambda_tau * margin_sum;

    let total = sample_weight * (policy_term - kl_term + regularizer);
    Ok(ObjectiveValue { policy_term, kl_term, regularizer, sample_weight, total })
}
