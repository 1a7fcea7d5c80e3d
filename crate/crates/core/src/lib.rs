//! Group-relative policy optimization with asymmetric treatment of correct
//! and incorrect responses.
//!
//! Correct responses get a KL penalty weight that shrinks with the observed
//! difficulty of their prompt; incorrect responses that run longer than the
//! group's correct ones get their (negative) advantage amplified. The crate
//! also ships the synthetic verifiable tasks, the small softmax policy they
//! are learned with, the training loop, and brute-force oracles.

pub mod config;
pub mod error;
pub mod objective;
pub mod oracle;
pub mod policy;
pub mod reward;
pub mod rng;
pub mod shaping;
pub mod tasks;
pub mod trainer;
pub mod types;
pub mod vocab;

pub use config::{LengthAnchorScope, OptimizerKind, TrainConfig};
pub use error::{ApoError, Result};
pub use objective::{
    group_loss, group_loss_and_gradient, group_loss_gradient, importance_ratio, token_kl,
    LossBreakdown,
};
pub use policy::{PolicySnapshot, SampledResponse};
pub use reward::{check_accuracy, check_format, composite_reward, RewardBreakdown};
pub use shaping::{
    dads_kl_weights, eval_projection, group_difficulty, normalize_advantages, shape_group,
    stcr_alpha, ProjectionVariant,
};
pub use tasks::{generate_corpus, generate_task, Curriculum, TaskFamily, TaskGeneratorConfig};
pub use trainer::{
    coefficient_of_variation, rollout_phase, run_training, train_step, MetricRow, StepObserver,
    TrainState,
};
pub use types::{validate_group, RolloutGroup, ShapedAdvantages, TaskInstance, Trajectory};
pub use vocab::Vocab;
