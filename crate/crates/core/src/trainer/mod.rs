//! The training loop: group rollouts from the behavior policy, all-correct
//! filtering, advantage and KL shaping, summed group gradients and one
//! optimizer step per update, with diagnostics logged every step.

pub mod checkpoint;
pub mod metrics;
pub mod optimizer;

use crate::config::{LengthAnchorScope, TrainConfig};
use crate::error::{ApoError, Result};
use crate::objective::{group_loss_and_gradient, token_kl};
use crate::policy::PolicySnapshot;
use crate::reward::score_response;
use crate::rng::{tags, StreamRng};
use crate::shaping::shape_group_with_anchor;
use crate::tasks::Curriculum;
use crate::types::{RolloutGroup, ShapedAdvantages, TaskInstance, Trajectory};
use crate::vocab::Vocab;

pub use checkpoint::{Checkpoint, FileRecorder};
pub use metrics::{coefficient_of_variation, MetricRow};
pub use optimizer::OptimizerState;

/// Everything that evolves during a run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    /// Completed optimizer steps.
    pub step: u64,
    pub current: PolicySnapshot,
    /// Policy that generated the latest rollouts.
    pub behavior: PolicySnapshot,
    /// Frozen copy of the initial policy.
    pub reference: PolicySnapshot,
    pub optimizer: OptimizerState,
    pub metrics_log: Vec<MetricRow>,
}

/// The policy every run starts from for a given config.
pub fn initial_policy(config: &TrainConfig) -> PolicySnapshot {
    PolicySnapshot::template_prior(Vocab::Standard, config.max_response_tokens)
}

impl TrainState {
    pub fn new(config: &TrainConfig) -> Self {
        Self::from_policy(initial_policy(config), config)
    }

    pub fn from_policy(policy: PolicySnapshot, config: &TrainConfig) -> Self {
        Self {
            step: 0,
            optimizer: OptimizerState::new(config.optimizer, policy.params.len()),
            behavior: policy.clone(),
            reference: policy.clone(),
            current: policy,
            metrics_log: Vec::new(),
        }
    }

    /// Rebuilds a state from a checkpoint. The reference policy is the
    /// initial policy of the checkpoint's config; the metrics log starts empty.
    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        let reference = initial_policy(&ckpt.config);
        let current = PolicySnapshot::from_params(
            reference.vocab,
            reference.max_length,
            reference.hash_buckets,
            ckpt.params.clone(),
        )?;
        Ok(Self {
            step: ckpt.step,
            behavior: current.clone(),
            current,
            reference,
            optimizer: ckpt.optimizer.clone(),
            metrics_log: Vec::new(),
        })
    }
}

/// Summary of one call to [`train_step`].
#[derive(Debug, Clone, PartialEq)]
pub struct StepReport {
    pub row: MetricRow,
    pub groups_trained: usize,
    pub total_loss: f64,
}

/// Samples G responses per task from the behavior policy and records
/// log-probabilities under the behavior, reference and current policies.
pub fn rollout_phase(
    state: &TrainState,
    tasks: &[TaskInstance],
    config: &TrainConfig,
) -> Vec<RolloutGroup> {
    let vocab = state.behavior.vocab;
    tasks
        .iter()
        .enumerate()
        .map(|(k, task)| {
            let trajectories = (0..config.group_size)
                .map(|j| {
                    let mut rng = StreamRng::derive(
                        config.seed,
                        &[tags::ROLLOUT, state.step, k as u64, j as u64],
                    );
                    let sample = state.behavior.sample_response(task, &mut rng);
                    let text = vocab.detokenize(&sample.tokens);
                    let reward = score_response(&text, &task.ground_truth, config.lambda);
                    let logp_current = if state.current == state.behavior {
                        sample.logprobs.clone()
                    } else {
                        state.current.score_logprob(task, &sample.tokens)
                    };
                    Trajectory {
                        logp_ref: state.reference.score_logprob(task, &sample.tokens),
                        logp_current,
                        length: sample.tokens.len(),
                        logp_old: sample.logprobs,
                        tokens: sample.tokens,
                        accuracy_reward: reward.accuracy,
                        format_reward: reward.format,
                    }
                })
                .collect();
            RolloutGroup::from_trajectories(task.clone(), trajectories, config.lambda)
        })
        .collect()
}

/// Re-scores `logp_current` of every trajectory under `policy`.
pub fn refresh_current_logprobs(groups: &mut [RolloutGroup], policy: &PolicySnapshot) {
    for g in groups {
        for t in &mut g.trajectories {
            t.logp_current = policy.score_logprob(&g.task, &t.tokens);
        }
    }
}

/// Shaping routine used by [`train_step_with`]; receives the length anchor
/// chosen by the configured scope.
pub type Shaper<'a> = dyn Fn(&RolloutGroup, &TrainConfig, Option<f64>) -> Result<ShapedAdvantages> + 'a;

/// One optimizer step on a batch of groups with the standard shaping.
pub fn train_step(
    state: &mut TrainState,
    groups: &[RolloutGroup],
    config: &TrainConfig,
) -> Result<StepReport> {
    train_step_with(state, groups, config, &shape_group_with_anchor)
}

/// One optimizer step with a caller-supplied shaping routine.
///
/// All-correct groups are dropped and counted; groups whose composite
/// rewards are all equal are skipped and counted. A metrics row is appended
/// even when nothing is trained, in which case [`ApoError::EmptyBatch`] is
/// returned and the parameters are untouched.
pub fn train_step_with(
    state: &mut TrainState,
    groups: &[RolloutGroup],
    config: &TrainConfig,
    shaper: &Shaper<'_>,
) -> Result<StepReport> {
    let batch_anchor = match config.length_anchor_scope {
        LengthAnchorScope::Group => None,
        LengthAnchorScope::Batch => {
            let lens: Vec<usize> = groups
                .iter()
                .flat_map(|g| g.trajectories.iter().filter(|t| t.is_correct()).map(|t| t.length))
                .collect();
            (!lens.is_empty()).then(|| lens.iter().sum::<usize>() as f64 / lens.len() as f64)
        }
    };

    let mut grad = vec![0.0; state.current.params.len()];
    let mut filtered = 0;
    let mut zero_variance = 0;
    let mut trained = 0;
    let mut clipped_tokens = 0.0;
    let mut trained_tokens = 0usize;
    let mut total_loss = 0.0;

    for group in groups {
        if group.is_all_correct() {
            filtered += 1;
            continue;
        }
        if group.trajectories.iter().all(|t| {
            (t.accuracy_reward, t.format_reward)
                == (group.trajectories[0].accuracy_reward, group.trajectories[0].format_reward)
        }) {
            zero_variance += 1;
            continue;
        }
        let anchor = match config.length_anchor_scope {
            LengthAnchorScope::Group => group.mean_correct_length,
            LengthAnchorScope::Batch => batch_anchor,
        };
        let shaped = shaper(group, config, anchor)?;
        let (loss, g) = group_loss_and_gradient(group, &shaped, &state.current, config)?;
        for (acc, x) in grad.iter_mut().zip(&g) {
            *acc += x;
        }
        let tokens: usize = group.trajectories.iter().map(|t| t.length).sum();
        clipped_tokens += loss.clip_fraction * tokens as f64;
        trained_tokens += tokens;
        total_loss += loss.total;
        trained += 1;
    }

    let row = batch_metrics(
        state,
        groups,
        filtered,
        zero_variance,
        if trained_tokens == 0 { 0.0 } else { clipped_tokens / trained_tokens as f64 },
    );
    if trained > 0 {
        state.optimizer.apply(&mut state.current.params, &grad, config);
    }
    state.metrics_log.push(row.clone());
    state.step += 1;
    if trained == 0 {
        return Err(ApoError::EmptyBatch);
    }
    Ok(StepReport {
        row,
        groups_trained: trained,
        total_loss,
    })
}

fn mean(xs: &[f64]) -> Option<f64> {
    (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
}

fn batch_metrics(
    state: &TrainState,
    groups: &[RolloutGroup],
    filtered: usize,
    zero_variance: usize,
    clip_fraction: f64,
) -> MetricRow {
    let mut acc = Vec::new();
    let mut fmt = Vec::new();
    let mut len_ok = Vec::new();
    let mut len_bad = Vec::new();
    let (mut entropy, mut contexts) = (0.0, 0usize);
    let (mut kl, mut tokens) = (0.0, 0usize);
    for g in groups {
        for t in &g.trajectories {
            acc.push(t.accuracy_reward as f64);
            fmt.push(t.format_reward as f64);
            if t.is_correct() {
                len_ok.push(t.length as f64);
            } else {
                len_bad.push(t.length as f64);
            }
            let (h, n) = state.current.response_entropy_sum(&g.task, &t.tokens);
            entropy += h;
            contexts += n;
            kl += t
                .logp_current
                .iter()
                .zip(&t.logp_ref)
                .map(|(&c, &r)| token_kl(c, r))
                .sum::<f64>();
            tokens += t.length;
        }
    }
    let mean_len_correct = mean(&len_ok);
    let mean_len_incorrect = mean(&len_bad);
    MetricRow {
        step: state.step,
        mean_accuracy_reward: mean(&acc).unwrap_or(0.0),
        mean_format_reward: mean(&fmt).unwrap_or(0.0),
        mean_len_correct,
        mean_len_incorrect,
        length_gap: mean_len_incorrect.zip(mean_len_correct).map(|(b, c)| b - c),
        policy_entropy: if contexts == 0 { 0.0 } else { entropy / contexts as f64 },
        mean_kl: if tokens == 0 { 0.0 } else { kl / tokens as f64 },
        clip_fraction,
        groups_filtered_all_correct: filtered,
        groups_zero_variance: zero_variance,
    }
}

/// Receives the state after every optimizer step.
pub trait StepObserver {
    fn on_step(&mut self, state: &TrainState) -> Result<()>;
}

/// Discards everything.
pub struct NullObserver;

impl StepObserver for NullObserver {
    fn on_step(&mut self, _: &TrainState) -> Result<()> {
        Ok(())
    }
}

impl<F: FnMut(&TrainState) -> Result<()>> StepObserver for F {
    fn on_step(&mut self, state: &TrainState) -> Result<()> {
        self(state)
    }
}

/// Trains from the initial policy for `steps` optimizer steps.
pub fn run_training(
    config: &TrainConfig,
    curriculum: &Curriculum,
    steps: u64,
    observer: &mut dyn StepObserver,
) -> Result<TrainState> {
    config.validate()?;
    let mut state = TrainState::new(config);
    continue_training(&mut state, config, curriculum, steps, observer)?;
    Ok(state)
}

/// Advances `state` until `state.step == total_steps`. Tiers are scheduled
/// against `total_steps`, so a resumed run follows the same curriculum.
pub fn continue_training(
    state: &mut TrainState,
    config: &TrainConfig,
    curriculum: &Curriculum,
    total_steps: u64,
    observer: &mut dyn StepObserver,
) -> Result<()> {
    config.validate()?;
    if state.step < total_steps && curriculum.is_empty() {
        return Err(ApoError::InvalidConfig("curriculum has no tasks".into()));
    }
    while state.step < total_steps {
        let tasks = curriculum.batch(state.step, total_steps, config.batch_size, config.seed);
        state.behavior = state.current.clone();
        let mut groups = rollout_phase(state, &tasks, config);
        for update in 0..config.updates_per_rollout {
            if state.step >= total_steps {
                break;
            }
            if update > 0 {
                refresh_current_logprobs(&mut groups, &state.current);
            }
            match train_step(state, &groups, config) {
                Ok(_) | Err(ApoError::EmptyBatch) => {}
                Err(e) => return Err(e),
            }
            observer.on_step(state)?;
        }
    }
    Ok(())
}
