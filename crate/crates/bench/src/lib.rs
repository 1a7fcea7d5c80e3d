//! Fixtures shared by the benchmarks.

use apo_core::trainer::{rollout_phase, TrainState};
use apo_core::{Curriculum, RolloutGroup, TaskFamily, TrainConfig};

/// A realistic batch of rollout groups from the initial policy.
pub fn sample_groups(batch: usize, seed: u64) -> (TrainConfig, TrainState, Vec<RolloutGroup>) {
    let config = TrainConfig { seed, batch_size: batch, ..Default::default() };
    let state = TrainState::new(&config);
    let curriculum = Curriculum::generated(TaskFamily::ModularChain, &[0, 1, 2], 50, seed);
    let tasks = curriculum.batch(0, 1, batch, seed);
    let groups = rollout_phase(&state, &tasks, &config);
    (config, state, groups)
}
