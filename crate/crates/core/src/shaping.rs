//! Advantage and KL-weight shaping for one rollout group.
//!
//! The pipeline for a group of G responses is:
//!
//! 1. composite reward `r_i = acc_i + lambda * fmt_i`;
//! 2. group-normalized advantage `A_i = (r_i - mean) / (std + eps)` using the
//!    population standard deviation, broadcast to every token of `o_i`;
//! 3. difficulty `d = #incorrect / G`;
//! 4. KL weight `beta_i = f(d) * beta` for correct responses when `d != 0`,
//!    `beta` otherwise (difficulty-adaptive divergence shaping);
//! 5. for incorrect responses longer than the mean correct length, the
//!    advantage is multiplied by `alpha_i = 2 - mu^(L_mean_acc - L_i)`
//!    (suboptimal trajectory complexity regularization).
//!
//! Groups where every response is correct carry no advantage signal and are
//! marked skipped.

use serde::{Deserialize, Serialize};

use crate::config::TrainConfig;
use crate::error::{ApoError, Result};
use crate::reward::composite_reward;
use crate::types::{validate_group, RolloutGroup, ShapedAdvantages};

/// Projection from difficulty to a KL-weight multiplier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ProjectionVariant {
    /// `1 - e^(e (d - 1))`
    #[default]
    Exponential,
    /// `1 - d`
    Linear,
    /// `1 - d^3`
    Cubic,
    /// `1`
    Constant,
}

impl ProjectionVariant {
    pub const ALL: [ProjectionVariant; 4] = [
        ProjectionVariant::Exponential,
        ProjectionVariant::Linear,
        ProjectionVariant::Cubic,
        ProjectionVariant::Constant,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ProjectionVariant::Exponential => "exponential",
            ProjectionVariant::Linear => "linear",
            ProjectionVariant::Cubic => "cubic",
            ProjectionVariant::Constant => "constant",
        }
    }
}

pub fn eval_projection(variant: ProjectionVariant, d: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&d) {
        return Err(ApoError::DomainError(d));
    }
    Ok(match variant {
        ProjectionVariant::Exponential => 1.0 - (std::f64::consts::E * (d - 1.0)).exp(),
        ProjectionVariant::Linear => 1.0 - d,
        ProjectionVariant::Cubic => 1.0 - d * d * d,
        ProjectionVariant::Constant => 1.0,
    })
}

/// Fraction of zero accuracy flags.
pub fn group_difficulty(accuracy_flags: &[u8], group_size: usize) -> f64 {
    debug_assert_eq!(accuracy_flags.len(), group_size);
    let incorrect = accuracy_flags.iter().filter(|&&a| a == 0).count();
    incorrect as f64 / group_size as f64
}

/// `(r_i - mean) / (std + epsilon_std)` with the population std; a constant
/// reward vector maps to all zeros.
pub fn normalize_advantages(rewards: &[f64], epsilon_std: f64) -> Vec<f64> {
    let n = rewards.len() as f64;
    if rewards.iter().all(|&r| r == rewards[0]) {
        return vec![0.0; rewards.len()];
    }
    let mean = rewards.iter().sum::<f64>() / n;
    let var = rewards.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / n;
    let std = var.sqrt();
    if std == 0.0 {
        return vec![0.0; rewards.len()];
    }
    rewards.iter().map(|r| (r - mean) / (std + epsilon_std)).collect()
}

/// Per-trajectory KL weights. All-correct groups must be filtered first.
pub fn dads_kl_weights(
    group: &RolloutGroup,
    beta: f64,
    variant: ProjectionVariant,
) -> Result<Vec<f64>> {
    let d = group.difficulty;
    if d == 0.0 {
        return Err(ApoError::FilteredGroup);
    }
    let scale = eval_projection(variant, d)?;
    Ok(group
        .trajectories
        .iter()
        .map(|t| if t.is_correct() { scale * beta } else { beta })
        .collect())
}

/// `2 - mu^(mean_correct_length - length)`, evaluated as
/// `1 - expm1((mean - length) ln mu)` to keep precision for mu near 1.
pub fn stcr_alpha(length: usize, mean_correct_length: f64, mu: f64) -> f64 {
    let exponent = (mean_correct_length - length as f64) * (mu - 1.0).ln_1p();
    1.0 - exponent.exp_m1()
}

pub fn shape_group(group: &RolloutGroup, config: &TrainConfig) -> Result<ShapedAdvantages> {
    shape_group_with_anchor(group, config, group.mean_correct_length)
}

/// Like [`shape_group`] but with the mean correct length supplied by the
/// caller, for batch-scoped anchoring. `None` disables length regularization.
pub fn shape_group_with_anchor(
    group: &RolloutGroup,
    config: &TrainConfig,
    mean_correct_length: Option<f64>,
) -> Result<ShapedAdvantages> {
    validate_group(group)?;
    if group.difficulty == 0.0 {
        return Ok(ShapedAdvantages::skipped(group));
    }

    let rewards: Vec<f64> = group
        .trajectories
        .iter()
        .map(|t| composite_reward(t.accuracy_reward, t.format_reward, config.lambda))
        .collect();
    let mut advantages = normalize_advantages(&rewards, config.epsilon_std);

    if config.enable_stcr {
        if let Some(anchor) = mean_correct_length {
            for (adv, t) in advantages.iter_mut().zip(&group.trajectories) {
                if !t.is_correct() && t.length as f64 > anchor {
                    *adv *= stcr_alpha(t.length, anchor, config.mu);
                }
            }
        }
    }

    let kl_weight = if !config.enable_kl {
        vec![0.0; group.group_size()]
    } else if config.enable_dads {
        dads_kl_weights(group, config.beta, config.fd_variant)?
    } else {
        vec![config.beta; group.group_size()]
    };

    let per_token_advantage = advantages
        .iter()
        .zip(&group.trajectories)
        .map(|(&a, t)| vec![a; t.length])
        .collect();

    Ok(ShapedAdvantages {
        per_token_advantage,
        kl_weight,
        group_skipped: false,
    })
}
