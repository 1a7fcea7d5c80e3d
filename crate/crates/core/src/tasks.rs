//! Synthetic verifiable tasks with graded difficulty, and the curriculum that
//! orders them.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::rng::{derive_seed, tags, StreamRng};
use crate::types::TaskInstance;
use crate::vocab::Vocab;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum TaskFamily {
    /// `((a op b) op c …) mod 10` over single digits.
    #[default]
    ModularChain,
    /// Reproduce a digit string.
    SequenceCopy,
    /// Xor of a chain of bits.
    ParityChain,
}

impl TaskFamily {
    pub fn name(self) -> &'static str {
        match self {
            TaskFamily::ModularChain => "modular-chain",
            TaskFamily::SequenceCopy => "sequence-copy",
            TaskFamily::ParityChain => "parity-chain",
        }
    }

    fn tag(self) -> u64 {
        match self {
            TaskFamily::ModularChain => 1,
            TaskFamily::SequenceCopy => 2,
            TaskFamily::ParityChain => 3,
        }
    }
}

impl std::str::FromStr for TaskFamily {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "modular-chain" => Ok(TaskFamily::ModularChain),
            "sequence-copy" => Ok(TaskFamily::SequenceCopy),
            "parity-chain" => Ok(TaskFamily::ParityChain),
            other => Err(format!("unknown task family `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskGeneratorConfig {
    pub family: TaskFamily,
    /// Tier `t` means a chain of `t + 1` steps.
    pub tier: u32,
    pub seed: u64,
}

const MODULUS: i64 = 10;

/// Deterministic in `(family, tier, seed)`; tokens use [`Vocab::Standard`].
pub fn generate_task(config: &TaskGeneratorConfig) -> TaskInstance {
    let vocab = Vocab::Standard;
    let sym = |s: &str| vocab.find(s).expect("standard symbol");
    let digit = |d: i64| vocab.digit(d as u32).expect("digit");
    let mut rng = StreamRng::derive(config.seed, &[tags::TASK, config.family.tag(), config.tier as u64]);
    let steps = config.tier as usize + 1;

    let (prompt, truth) = match config.family {
        TaskFamily::ModularChain => {
            let mut acc = rng.below(10) as i64;
            let mut prompt = vec![digit(acc)];
            for _ in 0..steps {
                let operand = rng.below(10) as i64;
                let (op, value) = match rng.below(3) {
                    0 => ("+", acc + operand),
                    1 => ("-", acc - operand),
                    _ => ("*", acc * operand),
                };
                acc = value.rem_euclid(MODULUS);
                prompt.push(sym(op));
                prompt.push(digit(operand));
            }
            prompt.extend([sym(" mod "), digit(1), digit(0)]);
            (prompt, acc.to_string())
        }
        TaskFamily::SequenceCopy => {
            let digits: Vec<i64> = (0..steps).map(|_| rng.below(10) as i64).collect();
            let mut prompt: Vec<u32> = digits.iter().map(|&d| digit(d)).collect();
            prompt.push(sym("="));
            (prompt, digits.iter().map(|d| d.to_string()).collect())
        }
        TaskFamily::ParityChain => {
            let bits: Vec<i64> = (0..steps).map(|_| rng.below(2) as i64).collect();
            let mut prompt = Vec::with_capacity(2 * steps);
            for (i, &b) in bits.iter().enumerate() {
                if i > 0 {
                    prompt.push(sym("^"));
                }
                prompt.push(digit(b));
            }
            (prompt, bits.iter().fold(0, |p, b| p ^ b).to_string())
        }
    };

    TaskInstance {
        id: format!("{}/t{}/{:016x}", config.family.name(), config.tier, config.seed),
        prompt_tokens: prompt,
        ground_truth: truth,
        difficulty_tier: config.tier,
    }
}

/// `per_tier` tasks for each tier, tiers in the given order.
pub fn generate_corpus(family: TaskFamily, tiers: &[u32], per_tier: usize, seed: u64) -> Vec<TaskInstance> {
    tiers
        .iter()
        .flat_map(|&tier| {
            (0..per_tier).map(move |i| {
                generate_task(&TaskGeneratorConfig {
                    family,
                    tier,
                    seed: derive_seed(seed, &[tags::CORPUS, family.tag(), tier as u64, i as u64]),
                })
            })
        })
        .collect()
}

/// Task pools ordered by tier. Training spends an equal share of steps on
/// each tier, easiest first.
#[derive(Debug, Clone, PartialEq)]
pub struct Curriculum {
    tiers: Vec<(u32, Vec<TaskInstance>)>,
}

impl Curriculum {
    pub fn from_tasks(tasks: impl IntoIterator<Item = TaskInstance>) -> Self {
        let mut pools: BTreeMap<u32, Vec<TaskInstance>> = BTreeMap::new();
        for t in tasks {
            pools.entry(t.difficulty_tier).or_default().push(t);
        }
        Self {
            tiers: pools.into_iter().collect(),
        }
    }

    pub fn generated(family: TaskFamily, tiers: &[u32], per_tier: usize, seed: u64) -> Self {
        Self::from_tasks(generate_corpus(family, tiers, per_tier, seed))
    }

    pub fn is_empty(&self) -> bool {
        self.tiers.is_empty()
    }

    pub fn tiers(&self) -> impl Iterator<Item = u32> + '_ {
        self.tiers.iter().map(|(t, _)| *t)
    }

    pub fn tier_index_for_step(&self, step: u64, total_steps: u64) -> usize {
        let n = self.tiers.len() as u64;
        if total_steps == 0 {
            return 0;
        }
        ((step.min(total_steps - 1) * n) / total_steps) as usize
    }

    /// Samples `batch` tasks with replacement from the tier active at `step`.
    pub fn batch(&self, step: u64, total_steps: u64, batch: usize, seed: u64) -> Vec<TaskInstance> {
        let (_, pool) = &self.tiers[self.tier_index_for_step(step, total_steps)];
        let mut rng = StreamRng::derive(seed, &[tags::BATCH, step]);
        (0..batch)
            .map(|_| pool[rng.below(pool.len() as u64) as usize].clone())
            .collect()
    }
}
