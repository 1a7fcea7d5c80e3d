//! Clipped group-relative surrogate with a per-token KL penalty, and its
//! analytic gradient through the softmax policy.
//!
//! For a group of G responses the maximized objective is
//!
//! ```text
//! J = 1/G sum_i 1/|o_i| sum_t [ min(r_it A_it, clip(r_it, 1-eps, 1+eps) A_it) - beta_i kl_it ]
//! ```
//!
//! with `r_it = exp(logp_current - logp_old)` and the k3 estimator
//! `kl_it = exp(D) - D - 1`, `D = logp_ref - logp_current`. The engine
//! minimizes `-J`. Only `logp_current` carries gradient.

use serde::{Deserialize, Serialize};

use crate::config::TrainConfig;
use crate::error::{ApoError, Result};
use crate::policy::PolicySnapshot;
use crate::types::{RolloutGroup, ShapedAdvantages};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct LossBreakdown {
    pub surrogate_term: f64,
    pub kl_term: f64,
    /// `-(surrogate_term - kl_term)`, the minimized quantity.
    pub total: f64,
    /// Share of tokens where the clipped branch of the min was selected.
    pub clip_fraction: f64,
}

pub fn importance_ratio(logp_current: f64, logp_old: f64) -> f64 {
    (logp_current - logp_old).exp()
}

/// k3 estimator `exp(D) - D - 1` with `D = logp_ref - logp_current`.
/// Uses a series for small `|D|` so the result is positive whenever `D != 0`.
pub fn token_kl(logp_current: f64, logp_ref: f64) -> f64 {
    let d = logp_ref - logp_current;
    if d.abs() < 1e-4 {
        d * d * (0.5 + d * (1.0 / 6.0 + d / 24.0))
    } else {
        d.exp_m1() - d
    }
}

/// `d token_kl / d logp_current = 1 - exp(D)`.
pub fn token_kl_grad(logp_current: f64, logp_ref: f64) -> f64 {
    -(logp_ref - logp_current).exp_m1()
}

struct TokenTerms {
    surrogate: f64,
    /// d surrogate / d logp_current
    surrogate_grad: f64,
    clipped: bool,
}

fn surrogate_terms(logp_current: f64, logp_old: f64, advantage: f64, eps: f64) -> TokenTerms {
    let ratio = importance_ratio(logp_current, logp_old);
    let unclipped = ratio * advantage;
    let clipped_value = ratio.clamp(1.0 - eps, 1.0 + eps) * advantage;
    if clipped_value < unclipped {
        TokenTerms {
            surrogate: clipped_value,
            surrogate_grad: 0.0,
            clipped: true,
        }
    } else {
        TokenTerms {
            surrogate: unclipped,
            surrogate_grad: unclipped,
            clipped: false,
        }
    }
}

fn check_shapes(group: &RolloutGroup, shaped: &ShapedAdvantages) -> Result<()> {
    if shaped.group_skipped {
        return Err(ApoError::SkippedGroup);
    }
    let g = group.group_size();
    if shaped.per_token_advantage.len() != g || shaped.kl_weight.len() != g {
        return Err(ApoError::GroupSize {
            expected: g,
            found: shaped.per_token_advantage.len().min(shaped.kl_weight.len()),
        });
    }
    for (i, (adv, t)) in shaped.per_token_advantage.iter().zip(&group.trajectories).enumerate() {
        if adv.len() != t.length {
            return Err(ApoError::LengthMismatch {
                trajectory: i,
                field: "per_token_advantage",
                expected: t.length,
                found: adv.len(),
            });
        }
    }
    Ok(())
}

#[derive(Default)]
struct Accumulator {
    surrogate: f64,
    kl: f64,
    clipped_tokens: usize,
    tokens: usize,
}

impl Accumulator {
    fn finish(self, group_size: usize) -> LossBreakdown {
        let g = group_size as f64;
        let surrogate_term = self.surrogate / g;
        let kl_term = self.kl / g;
        LossBreakdown {
            surrogate_term,
            kl_term,
            total: -(surrogate_term - kl_term),
            clip_fraction: if self.tokens == 0 {
                0.0
            } else {
                self.clipped_tokens as f64 / self.tokens as f64
            },
        }
    }
}

/// Loss from the log-probabilities recorded in the group.
pub fn group_loss(
    group: &RolloutGroup,
    shaped: &ShapedAdvantages,
    config: &TrainConfig,
) -> Result<LossBreakdown> {
    check_shapes(group, shaped)?;
    let mut acc = Accumulator::default();
    for (i, t) in group.trajectories.iter().enumerate() {
        let (mut surr, mut kl) = (0.0, 0.0);
        for k in 0..t.length {
            let terms = surrogate_terms(
                t.logp_current[k],
                t.logp_old[k],
                shaped.per_token_advantage[i][k],
                config.clip_epsilon,
            );
            surr += terms.surrogate;
            kl += shaped.kl_weight[i] * token_kl(t.logp_current[k], t.logp_ref[k]);
            acc.clipped_tokens += terms.clipped as usize;
        }
        acc.tokens += t.length;
        acc.surrogate += surr / t.length as f64;
        acc.kl += kl / t.length as f64;
    }
    Ok(acc.finish(group.group_size()))
}

/// Loss and `d loss / d params`, with `logp_current` recomputed from `policy`.
pub fn group_loss_and_gradient(
    group: &RolloutGroup,
    shaped: &ShapedAdvantages,
    policy: &PolicySnapshot,
    config: &TrainConfig,
) -> Result<(LossBreakdown, Vec<f64>)> {
    check_shapes(group, shaped)?;
    let g = group.group_size() as f64;
    let mut grad = vec![0.0; policy.params.len()];
    let mut acc = Accumulator::default();
    for (i, t) in group.trajectories.iter().enumerate() {
        let len = t.length as f64;
        let beta = shaped.kl_weight[i];
        let (mut surr, mut kl) = (0.0, 0.0);
        policy.for_each_token(&group.task, &t.tokens, |step| {
            let k = step.index;
            let logp = step.log_probs[step.token as usize];
            let terms = surrogate_terms(
                logp,
                t.logp_old[k],
                shaped.per_token_advantage[i][k],
                config.clip_epsilon,
            );
            surr += terms.surrogate;
            kl += beta * token_kl(logp, t.logp_ref[k]);
            acc.clipped_tokens += terms.clipped as usize;
            let dobj = terms.surrogate_grad - beta * token_kl_grad(logp, t.logp_ref[k]);
            let weight = -dobj / (g * len);
            if weight != 0.0 {
                policy.add_logprob_gradient(&step, weight, &mut grad);
            }
        });
        acc.tokens += t.length;
        acc.surrogate += surr / len;
        acc.kl += kl / len;
    }
    Ok((acc.finish(group.group_size()), grad))
}

pub fn group_loss_gradient(
    group: &RolloutGroup,
    shaped: &ShapedAdvantages,
    policy: &PolicySnapshot,
    config: &TrainConfig,
) -> Result<Vec<f64>> {
    group_loss_and_gradient(group, shaped, policy, config).map(|(_, g)| g)
}
