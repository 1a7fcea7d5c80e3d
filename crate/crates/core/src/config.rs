//! Training hyperparameters.

use serde::{Deserialize, Serialize};

use crate::error::{ApoError, Result};
use crate::shaping::ProjectionVariant;
use crate::tasks::TaskFamily;

/// Optimizer applied to the summed group gradients.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    #[default]
    Sgd,
    Adam,
}

/// Population over which the mean correct length used by the length
/// regularizer is computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LengthAnchorScope {
    #[default]
    Group,
    Batch,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Responses sampled per task (G).
    pub group_size: usize,
    /// Weight of the format reward in the composite reward.
    pub lambda: f64,
    /// Base KL penalty weight.
    pub beta: f64,
    /// Base of the length-regularization coefficient; must exceed 1.
    pub mu: f64,
    pub clip_epsilon: f64,
    /// Base learning rate; the applied rate is `learning_rate * lr_multiplier`.
    pub learning_rate: f64,
    /// Desk-scale multiplier for the toy policy.
    pub lr_multiplier: f64,
    pub fd_variant: ProjectionVariant,
    pub enable_dads: bool,
    pub enable_stcr: bool,
    pub enable_kl: bool,
    pub seed: u64,
    /// Guard added to the group standard deviation.
    pub epsilon_std: f64,
    /// Tasks per training step.
    pub batch_size: usize,
    /// Optimizer steps taken on each rollout batch.
    pub updates_per_rollout: usize,
    pub optimizer: OptimizerKind,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub length_anchor_scope: LengthAnchorScope,
    /// Hard cap on decoded response length, in tokens.
    pub max_response_tokens: usize,
    /// Task family used when the corpus is generated in-process.
    pub task_family: TaskFamily,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            group_size: 8,
            lambda: 0.5,
            beta: 0.04,
            mu: 1.0001,
            clip_epsilon: 0.2,
            learning_rate: 1e-6,
            lr_multiplier: 1e6,
            fd_variant: ProjectionVariant::Exponential,
            enable_dads: true,
            enable_stcr: true,
            enable_kl: true,
            seed: 0,
            epsilon_std: 1e-6,
            batch_size: 16,
            updates_per_rollout: 1,
            optimizer: OptimizerKind::Sgd,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            length_anchor_scope: LengthAnchorScope::Group,
            max_response_tokens: 256,
            task_family: TaskFamily::ModularChain,
        }
    }
}

impl TrainConfig {
    /// Plain GRPO: no KL shaping, no length regularization, no KL penalty.
    pub fn grpo_baseline() -> Self {
        Self {
            enable_dads: false,
            enable_stcr: false,
            enable_kl: false,
            ..Self::default()
        }
    }

    pub fn effective_learning_rate(&self) -> f64 {
        self.learning_rate * self.lr_multiplier
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(ApoError::InvalidConfig(m.to_string()));
        if self.group_size < 2 {
            return fail("group_size must be at least 2");
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return fail("lambda must be a finite non-negative number");
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return fail("beta must be a finite non-negative number");
        }
        if !(self.mu > 1.0 && self.mu.is_finite()) {
            return fail("mu must be strictly greater than 1");
        }
        if !(self.clip_epsilon > 0.0 && self.clip_epsilon < 1.0) {
            return fail("clip_epsilon must lie in (0, 1)");
        }
        if !(self.effective_learning_rate() > 0.0 && self.effective_learning_rate().is_finite()) {
            return fail("learning_rate * lr_multiplier must be positive");
        }
        if !(self.epsilon_std > 0.0) {
            return fail("epsilon_std must be positive");
        }
        if self.batch_size == 0 {
            return fail("batch_size must be positive");
        }
        if self.updates_per_rollout == 0 {
            return fail("updates_per_rollout must be positive");
        }
        if self.max_response_tokens == 0 {
            return fail("max_response_tokens must be positive");
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) {
            return fail("adam betas must lie in [0, 1)");
        }
        Ok(())
    }
}
