use std::fs;

use apo_core::trainer::{
    continue_training, initial_policy, run_training, train_step, Checkpoint, FileRecorder, NullObserver,
};
use apo_core::{
    rollout_phase, validate_group, ApoError, Curriculum, OptimizerKind, TaskFamily, TrainConfig, TrainState,
};

fn curriculum() -> Curriculum {
    Curriculum::generated(TaskFamily::ModularChain, &[0, 1], 30, 9)
}

fn config() -> TrainConfig {
    TrainConfig {
        seed: 9,
        batch_size: 6,
        optimizer: OptimizerKind::Adam,
        adam_beta1: 0.9,
        lr_multiplier: 5e4,
        ..TrainConfig::default()
    }
}

#[test]
fn resumed_run_matches_uninterrupted_run() {
    let cfg = config();
    let cur = curriculum();
    let total = 24;

    let full = tempfile::tempdir().unwrap();
    let mut recorder = FileRecorder::create(full.path(), &cfg).unwrap();
    let straight = run_training(&cfg, &cur, total, &mut recorder).unwrap();

    let split = tempfile::tempdir().unwrap();
    let mut recorder = FileRecorder::create(split.path(), &cfg).unwrap();
    let mut state = TrainState::new(&cfg);
    let mut interrupt = |s: &TrainState| {
        use apo_core::StepObserver;
        recorder.on_step(s)?;
        if s.step == 10 {
            return Err(ApoError::Io("interrupted".into()));
        }
        Ok(())
    };
    assert!(continue_training(&mut state, &cfg, &cur, total, &mut interrupt).is_err());

    let ckpt = Checkpoint::load(&split.path().join("checkpoint.json")).unwrap();
    assert_eq!(ckpt.step, 10);
    let mut resumed = TrainState::from_checkpoint(&ckpt).unwrap();
    let mut recorder = FileRecorder::resume(split.path(), &cfg, ckpt.step).unwrap();
    continue_training(&mut resumed, &cfg, &cur, total, &mut recorder).unwrap();

    assert_eq!(resumed.current.params, straight.current.params);
    assert_eq!(resumed.optimizer, straight.optimizer);
    for file in ["metrics.csv", "metrics.jsonl", "checkpoint.json"] {
        assert_eq!(
            fs::read(full.path().join(file)).unwrap(),
            fs::read(split.path().join(file)).unwrap(),
            "{file}"
        );
    }
}

#[test]
fn every_step_accounts_for_every_group() {
    let cfg = config();
    let cur = curriculum();
    let mut state = TrainState::new(&cfg);
    for step in 0..15 {
        let tasks = cur.batch(step, 15, cfg.batch_size, cfg.seed);
        state.behavior = state.current.clone();
        let groups = rollout_phase(&state, &tasks, &cfg);
        for g in &groups {
            validate_group(g).unwrap();
            assert_eq!(g.group_size(), cfg.group_size);
        }
        let trained = match train_step(&mut state, &groups, &cfg) {
            Ok(report) => report.groups_trained,
            Err(ApoError::EmptyBatch) => 0,
            Err(e) => panic!("{e}"),
        };
        let row = state.metrics_log.last().unwrap();
        assert_eq!(row.step, step);
        assert_eq!(row.groups_filtered_all_correct + trained + row.groups_zero_variance, groups.len());
        assert!(row.mean_kl >= 0.0);
        if let (Some(bad), Some(good), Some(gap)) = (row.mean_len_incorrect, row.mean_len_correct, row.length_gap) {
            assert_eq!(gap, bad - good);
        }
    }
}

#[test]
fn reference_policy_never_moves() {
    let cfg = config();
    let state = run_training(&cfg, &curriculum(), 20, &mut NullObserver).unwrap();
    assert_eq!(state.reference, initial_policy(&cfg));
    assert_ne!(state.current, state.reference);
    assert_eq!(state.metrics_log.len(), 20);
}

#[test]
fn zero_steps_is_identity() {
    let cfg = config();
    let state = run_training(&cfg, &curriculum(), 0, &mut NullObserver).unwrap();
    assert_eq!(state, TrainState::new(&cfg));
}

#[test]
fn empty_curriculum_is_rejected() {
    let cfg = config();
    let empty = Curriculum::from_tasks(Vec::new());
    assert!(matches!(
        run_training(&cfg, &empty, 3, &mut NullObserver),
        Err(ApoError::InvalidConfig(_))
    ));
}
