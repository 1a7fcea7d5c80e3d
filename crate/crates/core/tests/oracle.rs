use apo_core::oracle::{exhaustive_expectation, ENUMERATION_CAP};
use apo_core::reward::score_response;
use apo_core::rng::StreamRng;
use apo_core::{ApoError, PolicySnapshot, TaskInstance, Vocab};

fn parity_task() -> TaskInstance {
    let v = Vocab::Binary;
    TaskInstance::new("parity", v.tokenize("1^0").unwrap(), "1", 1, v.size()).unwrap()
}

#[test]
fn exact_expectation_agrees_with_sampling() {
    let policy = PolicySnapshot::template_prior(Vocab::Binary, 7).perturbed(4, 0.3);
    let task = parity_task();
    let exact = exhaustive_expectation(&policy, &task, 7, 0.5).unwrap();
    assert!(exact > 0.05, "{exact}");

    let n = 100_000;
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    for i in 0..n {
        let r = policy.sample_response(&task, &mut StreamRng::derive(11, &[i]));
        let reward = score_response(&policy.vocab.detokenize(&r.tokens), &task.ground_truth, 0.5).total;
        sum += reward;
        sum_sq += reward * reward;
    }
    let mean = sum / n as f64;
    let se = ((sum_sq / n as f64 - mean * mean) / n as f64).sqrt();
    assert!((mean - exact).abs() < 4.0 * se, "sampled {mean} ± {se}, exact {exact}");
}

#[test]
fn certain_policy_earns_full_reward() {
    let v = Vocab::Binary;
    let mut policy = PolicySnapshot::template_prior(v, 8);
    let layout = policy.layout();
    let task = parity_task();
    // Push every context hard towards the one correct response.
    let script = ["<think>", "1", "</think>", "<answer>", "1", "</answer>"];
    let mut tokens: Vec<u32> = script.iter().map(|s| v.find(s).unwrap()).collect();
    tokens.push(v.eos());
    for k in 0..tokens.len() {
        let prefix = &tokens[..k];
        let mut state = apo_core::policy::DecodeState::new(v, &task.prompt_tokens);
        for &t in prefix {
            state.advance(v, t);
        }
        let (feature, _) = policy.features(&state)[3];
        policy.params[layout.param(feature, tokens[k])] += 60.0;
    }
    let exact = exhaustive_expectation(&policy, &task, 7, 0.5).unwrap();
    assert!((exact - 1.5).abs() < 1e-9, "{exact}");
}

#[test]
fn enumeration_is_capped() {
    let policy = PolicySnapshot::uniform(Vocab::Binary, 16);
    match exhaustive_expectation(&policy, &parity_task(), 8, 0.5) {
        Err(ApoError::ExplosionGuard(n)) => assert!(n > ENUMERATION_CAP),
        other => panic!("expected ExplosionGuard, got {other:?}"),
    }
}
