//! Domain types shared by every stage of the pipeline.
//!
//! All types serialize to the trajectory-log format: one JSON object per
//! line, token ids as integer arrays and log-probabilities as decimal floats
//! written in shortest round-trip form, so a parse reproduces every value
//! bit-exactly.

use std::io::{BufRead, Write};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{ApoError, Result};
use crate::reward::composite_reward;

/// One verifiable prompt with its canonical answer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskInstance {
    pub id: String,
    pub prompt_tokens: Vec<u32>,
    pub ground_truth: String,
    pub difficulty_tier: u32,
}

impl TaskInstance {
    pub fn new(
        id: impl Into<String>,
        prompt_tokens: Vec<u32>,
        ground_truth: impl Into<String>,
        difficulty_tier: u32,
        vocab_size: usize,
    ) -> Result<Self> {
        let task = Self {
            id: id.into(),
            prompt_tokens,
            ground_truth: ground_truth.into(),
            difficulty_tier,
        };
        task.validate(vocab_size)?;
        Ok(task)
    }

    pub fn validate(&self, vocab_size: usize) -> Result<()> {
        if self.prompt_tokens.is_empty() {
            return Err(ApoError::InvalidTask(format!("{}: empty prompt", self.id)));
        }
        if let Some(t) = self.prompt_tokens.iter().find(|&&t| t as usize >= vocab_size) {
            return Err(ApoError::InvalidTask(format!(
                "{}: token {t} outside vocabulary of {vocab_size}",
                self.id
            )));
        }
        if self.ground_truth.is_empty() {
            return Err(ApoError::InvalidTask(format!("{}: empty ground truth", self.id)));
        }
        Ok(())
    }
}

/// One sampled response `o_i` with per-token log-probabilities under the
/// current, behavior and reference policies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub tokens: Vec<u32>,
    pub logp_current: Vec<f64>,
    pub logp_old: Vec<f64>,
    pub logp_ref: Vec<f64>,
    pub length: usize,
    pub accuracy_reward: u8,
    pub format_reward: u8,
}

impl Trajectory {
    pub fn is_correct(&self) -> bool {
        self.accuracy_reward == 1
    }

    fn validate(&self, index: usize) -> Result<()> {
        if self.length == 0 {
            return Err(ApoError::LengthMismatch {
                trajectory: index,
                field: "length",
                expected: 1,
                found: 0,
            });
        }
        let seqs: [(&'static str, usize); 4] = [
            ("tokens", self.tokens.len()),
            ("logp_current", self.logp_current.len()),
            ("logp_old", self.logp_old.len()),
            ("logp_ref", self.logp_ref.len()),
        ];
        for (field, found) in seqs {
            if found != self.length {
                return Err(ApoError::LengthMismatch {
                    trajectory: index,
                    field,
                    expected: self.length,
                    found,
                });
            }
        }
        for (field, seq) in [
            ("logp_current", &self.logp_current),
            ("logp_old", &self.logp_old),
            ("logp_ref", &self.logp_ref),
        ] {
            if let Some((token, &value)) = seq
                .iter()
                .enumerate()
                .find(|(_, v)| !v.is_finite() || **v > 0.0)
            {
                return Err(ApoError::NonFiniteLogProb {
                    trajectory: index,
                    field,
                    token,
                    value,
                });
            }
        }
        for (field, value) in [
            ("accuracy_reward", self.accuracy_reward),
            ("format_reward", self.format_reward),
        ] {
            if value > 1 {
                return Err(ApoError::InvalidRewardFlag {
                    trajectory: index,
                    field,
                    value,
                });
            }
        }
        Ok(())
    }
}

/// The G responses sampled for one task together with their group statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RolloutGroup {
    pub task: TaskInstance,
    pub trajectories: Vec<Trajectory>,
    /// Fraction of incorrect trajectories.
    pub difficulty: f64,
    pub reward_mean: f64,
    pub reward_std: f64,
    /// Mean length of the correct trajectories, absent when none is correct.
    pub mean_correct_length: Option<f64>,
}

impl RolloutGroup {
    /// Builds a group and fills in its statistics; composite rewards use `lambda`.
    pub fn from_trajectories(
        task: TaskInstance,
        trajectories: Vec<Trajectory>,
        lambda: f64,
    ) -> Self {
        let g = trajectories.len();
        let incorrect = trajectories.iter().filter(|t| !t.is_correct()).count();
        let difficulty = if g == 0 { 0.0 } else { incorrect as f64 / g as f64 };
        let rewards: Vec<f64> = trajectories
            .iter()
            .map(|t| composite_reward(t.accuracy_reward, t.format_reward, lambda))
            .collect();
        let (reward_mean, reward_std) = population_moments(&rewards);
        let correct: Vec<usize> = trajectories
            .iter()
            .filter(|t| t.is_correct())
            .map(|t| t.length)
            .collect();
        let mean_correct_length = if correct.is_empty() {
            None
        } else {
            Some(correct.iter().sum::<usize>() as f64 / correct.len() as f64)
        };
        Self {
            task,
            trajectories,
            difficulty,
            reward_mean,
            reward_std,
            mean_correct_length,
        }
    }

    pub fn group_size(&self) -> usize {
        self.trajectories.len()
    }

    pub fn correct_count(&self) -> usize {
        self.trajectories.iter().filter(|t| t.is_correct()).count()
    }

    pub fn is_all_correct(&self) -> bool {
        self.correct_count() == self.group_size()
    }
}

pub(crate) fn population_moments(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Per-token advantages after normalization and length regularization, plus
/// the per-trajectory KL weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapedAdvantages {
    pub per_token_advantage: Vec<Vec<f64>>,
    pub kl_weight: Vec<f64>,
    pub group_skipped: bool,
}

impl ShapedAdvantages {
    /// The all-zero result for a group removed by the all-correct filter.
    pub fn skipped(group: &RolloutGroup) -> Self {
        Self {
            per_token_advantage: group
                .trajectories
                .iter()
                .map(|t| vec![0.0; t.length])
                .collect(),
            kl_weight: vec![0.0; group.group_size()],
            group_skipped: true,
        }
    }
}

/// Checks every structural invariant of a group.
pub fn validate_group(group: &RolloutGroup) -> Result<()> {
    let g = group.group_size();
    if g < 2 {
        return Err(ApoError::GroupSize {
            expected: 2,
            found: g,
        });
    }
    for (i, t) in group.trajectories.iter().enumerate() {
        t.validate(i)?;
    }
    let incorrect = g - group.correct_count();
    if group.difficulty != incorrect as f64 / g as f64 {
        return Err(ApoError::DifficultyMismatch {
            stored: group.difficulty,
            incorrect,
            group_size: g,
        });
    }
    let correct = g - incorrect;
    let anchor_ok = match group.mean_correct_length {
        Some(l) => correct > 0 && l.is_finite() && l >= 0.0,
        None => correct == 0,
    };
    if !anchor_ok {
        return Err(ApoError::CorrectLengthMismatch { correct });
    }
    Ok(())
}

/// Writes records as JSON lines.
pub fn write_jsonl<T: Serialize, W: Write>(mut out: W, records: &[T]) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// Reads JSON lines, skipping blank lines.
pub fn read_jsonl<T: DeserializeOwned, R: BufRead>(input: R) -> Result<Vec<T>> {
    let mut out = Vec::new();
    for (n, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line)
                .map_err(|e| ApoError::Parse(format!("line {}: {e}", n + 1)))?,
        );
    }
    Ok(out)
}
