//! Brute-force reference implementations for cross-checking the engine.
//!
//! Nothing here calls into `shaping` or `objective`; the scalar pipeline is
//! re-derived with plain loops so agreement is evidence, not tautology.

use serde::{Deserialize, Serialize};

use crate::config::TrainConfig;
use crate::error::{ApoError, Result};
use crate::policy::PolicySnapshot;
use crate::reward::score_response;
use crate::shaping::ProjectionVariant;
use crate::types::{validate_group, RolloutGroup, ShapedAdvantages, TaskInstance};

/// Hard cap on the number of enumerated sequences.
pub const ENUMERATION_CAP: u128 = 1 << 22;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct OracleReport {
    pub max_abs_diff: f64,
    pub max_rel_diff: f64,
    pub cases_checked: usize,
}

impl OracleReport {
    /// Folds one case into the report.
    pub fn record(&mut self, expected: &[f64], actual: &[f64]) {
        assert_eq!(expected.len(), actual.len(), "compared vectors differ in length");
        for (e, a) in expected.iter().zip(actual) {
            let abs = (e - a).abs();
            let rel = if e.abs() > 0.0 { abs / e.abs() } else { abs };
            self.max_abs_diff = self.max_abs_diff.max(abs);
            self.max_rel_diff = self.max_rel_diff.max(rel);
        }
        self.cases_checked += 1;
    }
}

/// Straight-line composite reward → group normalization → difficulty →
/// KL weights → length scaling, as an independent reference.
pub fn scalar_shape_pipeline(group: &RolloutGroup, config: &TrainConfig) -> Result<ShapedAdvantages> {
    validate_group(group)?;
    let g = group.trajectories.len();

    let mut wrong = 0usize;
    for t in &group.trajectories {
        if t.accuracy_reward == 0 {
            wrong += 1;
        }
    }
    let d = wrong as f64 / g as f64;

    if wrong == 0 {
        let mut adv = Vec::new();
        for t in &group.trajectories {
            adv.push(vec![0.0; t.length]);
        }
        return Ok(ShapedAdvantages {
            per_token_advantage: adv,
            kl_weight: vec![0.0; g],
            group_skipped: true,
        });
    }

    let mut r = vec![0.0; g];
    for i in 0..g {
        let t = &group.trajectories[i];
        r[i] = t.accuracy_reward as f64 + config.lambda * t.format_reward as f64;
    }

    let mut constant = true;
    for i in 1..g {
        if r[i] != r[0] {
            constant = false;
        }
    }
    let mut a = vec![0.0; g];
    if !constant {
        let mut sum = 0.0;
        for x in &r {
            sum += x;
        }
        let m = sum / g as f64;
        let mut ss = 0.0;
        for x in &r {
            ss += (x - m) * (x - m);
        }
        let sd = (ss / g as f64).sqrt();
        if sd != 0.0 {
            for i in 0..g {
                a[i] = (r[i] - m) / (sd + config.epsilon_std);
            }
        }
    }

    let mut correct_total = 0.0;
    let mut correct_n = 0usize;
    for t in &group.trajectories {
        if t.accuracy_reward == 1 {
            correct_total += t.length as f64;
            correct_n += 1;
        }
    }
    if config.enable_stcr && correct_n > 0 {
        let anchor = correct_total / correct_n as f64;
        for i in 0..g {
            let t = &group.trajectories[i];
            if t.accuracy_reward == 0 && (t.length as f64) > anchor {
                a[i] *= 2.0 - config.mu.powf(anchor - t.length as f64);
            }
        }
    }

    let mut w = vec![0.0; g];
    for i in 0..g {
        w[i] = if !config.enable_kl {
            0.0
        } else if config.enable_dads && group.trajectories[i].accuracy_reward == 1 && d != 0.0 {
            let f = match config.fd_variant {
                ProjectionVariant::Exponential => {
                    1.0 - std::f64::consts::E.powf(std::f64::consts::E * (d - 1.0))
                }
                ProjectionVariant::Linear => 1.0 - d,
                ProjectionVariant::Cubic => 1.0 - d.powi(3),
                ProjectionVariant::Constant => 1.0,
            };
            f * config.beta
        } else {
            config.beta
        };
    }

    let mut adv = Vec::new();
    for i in 0..g {
        adv.push(vec![a[i]; group.trajectories[i].length]);
    }
    Ok(ShapedAdvantages {
        per_token_advantage: adv,
        kl_weight: w,
        group_skipped: false,
    })
}

/// Central differences `(f(x + h e_i) - f(x - h e_i)) / 2h` for every coordinate.
pub fn fd_gradient(loss_fn: impl Fn(&[f64]) -> f64, params: &[f64], step: f64) -> Vec<f64> {
    assert!(step > 0.0, "finite-difference step must be positive");
    let mut x = params.to_vec();
    (0..params.len())
        .map(|i| {
            let orig = x[i];
            x[i] = orig + step;
            let up = loss_fn(&x);
            x[i] = orig - step;
            let down = loss_fn(&x);
            x[i] = orig;
            (up - down) / (2.0 * step)
        })
        .collect()
}

/// Central differences restricted to `coords`.
pub fn fd_gradient_at(
    loss_fn: impl Fn(&[f64]) -> f64,
    params: &[f64],
    step: f64,
    coords: &[usize],
) -> Vec<f64> {
    let mut x = params.to_vec();
    coords
        .iter()
        .map(|&i| {
            let orig = x[i];
            x[i] = orig + step;
            let up = loss_fn(&x);
            x[i] = orig - step;
            let down = loss_fn(&x);
            x[i] = orig;
            (up - down) / (2.0 * step)
        })
        .collect()
}

/// Fourth-order central differences restricted to `coords`:
/// `(-f(x+2h) + 8f(x+h) - 8f(x-h) + f(x-2h)) / 12h`. The truncation error is
/// O(h^4), so a larger `step` can be used and roundoff stays small for tiny
/// gradient components.
pub fn fd4_gradient_at(
    loss_fn: impl Fn(&[f64]) -> f64,
    params: &[f64],
    step: f64,
    coords: &[usize],
) -> Vec<f64> {
    assert!(step > 0.0, "finite-difference step must be positive");
    let mut x = params.to_vec();
    coords
        .iter()
        .map(|&i| {
            let orig = x[i];
            let mut at = |k: f64| {
                x[i] = orig + k * step;
                loss_fn(&x)
            };
            let (p2, p1, m1, m2) = (at(2.0), at(1.0), at(-1.0), at(-2.0));
            x[i] = orig;
            (-p2 + 8.0 * p1 - 8.0 * m1 + m2) / (12.0 * step)
        })
        .collect()
}

/// Exact expected composite reward, summing `p(o) r(o)` over every response
/// the policy can emit with at most `max_len` tokens (responses that reach
/// the cap without end-of-sequence are truncated, as in sampling).
pub fn exhaustive_expectation(
    policy: &PolicySnapshot,
    task: &TaskInstance,
    max_len: usize,
    lambda: f64,
) -> Result<f64> {
    let v = policy.vocab_size() as u128;
    let mut count: u128 = 0;
    let mut layer: u128 = 1;
    for _ in 0..max_len {
        layer = layer.saturating_mul(v);
        count = count.saturating_add(layer);
        if count > ENUMERATION_CAP {
            return Err(ApoError::ExplosionGuard(count));
        }
    }
    let mut prefix = Vec::with_capacity(max_len);
    Ok(expand(policy, task, max_len, lambda, &mut prefix, 0.0))
}

fn expand(
    policy: &PolicySnapshot,
    task: &TaskInstance,
    max_len: usize,
    lambda: f64,
    prefix: &mut Vec<u32>,
    logp: f64,
) -> f64 {
    let eos = policy.vocab.eos();
    let next = policy.next_token_logprobs(&task.prompt_tokens, prefix);
    let mut total = 0.0;
    for (tok, lp) in next.iter().enumerate() {
        let tok = tok as u32;
        prefix.push(tok);
        let lp_seq = logp + lp;
        if tok == eos || prefix.len() == max_len {
            let text = policy.vocab.detokenize(prefix);
            total += lp_seq.exp() * score_response(&text, &task.ground_truth, lambda).total;
        } else {
            total += expand(policy, task, max_len, lambda, prefix, lp_seq);
        }
        prefix.pop();
    }
    total
}
