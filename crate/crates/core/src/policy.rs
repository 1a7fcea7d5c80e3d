//! A small autoregressive softmax policy over a synthetic vocabulary.
//!
//! The next-token distribution is a log-linear model over five active
//! features of the decoding context:
//!
//! | block       | size               | value                                  |
//! |-------------|--------------------|----------------------------------------|
//! | bias        | 1                  | 1                                      |
//! | previous    | V + 1 (incl. BOS)  | 1                                      |
//! | previous-2  | V + 1              | 1                                      |
//! | section×pos | 5 sections × 8     | 1                                      |
//! | scratch     | V + 1              | 1 in the answer, 0 elsewhere           |
//! | prompt      | H hashed buckets   | 3 outside the answer, 0 inside         |
//!
//! Logits are `z_v = sum_k x_k W[f_k, v]`, so the gradient of `log p(y)` with
//! respect to `W[f, v]` is `x_f (1[v = y] - p_v)`.
//!
//! The answer never sees the prompt directly. The scratch feature is the last
//! digit written inside the think section, and the prompt feature is hashed
//! from the prompt tokens, the section and (inside the think section) that
//! same digit. A task is solved by writing the right digit while thinking and
//! copying it into the answer.

use serde::{Deserialize, Serialize};

use crate::error::{ApoError, Result};
use crate::rng::{derive_seed, splitmix64, StreamRng};
use crate::types::TaskInstance;
use crate::vocab::{TokenClass, Vocab};

pub const DEFAULT_HASH_BUCKETS: usize = 768;
pub const DEFAULT_MAX_LENGTH: usize = 256;
const SECTIONS: usize = 5;
const POS_BUCKETS: usize = 8;
const ACTIVE: usize = 6;
const PROMPT_SCALE: f64 = 3.0;
const COPY_PRIOR: f64 = 4.0;

/// Position in the `<think>…</think><answer>…</answer>` template.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Section {
    Start = 0,
    Think = 1,
    Between = 2,
    Answer = 3,
    Done = 4,
}

fn pos_bucket(p: usize) -> usize {
    match p {
        0..=3 => p,
        4 | 5 => 4,
        6..=9 => 5,
        10..=17 => 6,
        _ => 7,
    }
}

/// Incrementally maintained summary of a decoding prefix.
#[derive(Debug, Clone)]
pub struct DecodeState {
    prompt_key: u64,
    prev: u32,
    prev2: u32,
    section: Section,
    pos_in_section: usize,
    scratch: Option<u32>,
}

impl DecodeState {
    pub fn new(vocab: Vocab, prompt: &[u32]) -> Self {
        let bos = vocab.size() as u32;
        let n = prompt.len();
        Self {
            prompt_key: prompt.iter().fold(0x5EED, |k, &t| splitmix64(k ^ t as u64)),
            prev: if n >= 1 { prompt[n - 1] } else { bos },
            prev2: if n >= 2 { prompt[n - 2] } else { bos },
            section: Section::Start,
            pos_in_section: 0,
            scratch: None,
        }
    }

    pub fn section(&self) -> Section {
        self.section
    }

    pub fn advance(&mut self, vocab: Vocab, token: u32) {
        use Section::*;
        let next = match (self.section, vocab.class(token)) {
            (Start, TokenClass::ThinkOpen) => Some(Think),
            (Think, TokenClass::ThinkClose) => Some(Between),
            (Start | Between, TokenClass::AnswerOpen) => Some(Answer),
            (Answer, TokenClass::AnswerClose) => Some(Done),
            _ => None,
        };
        if self.section == Think && next.is_none() && vocab.class(token) == TokenClass::Digit {
            self.scratch = Some(token);
        }
        match next {
            Some(s) => {
                self.section = s;
                self.pos_in_section = 0;
            }
            None => self.pos_in_section += 1,
        }
        self.prev2 = self.prev;
        self.prev = token;
    }
}

/// Indices of the feature blocks for a vocabulary and hash size.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FeatureLayout {
    pub vocab_size: usize,
    pub hash_buckets: usize,
}

impl FeatureLayout {
    pub fn bias(&self) -> usize {
        0
    }

    pub fn prev(&self, token: u32) -> usize {
        1 + token as usize
    }

    pub fn prev2(&self, token: u32) -> usize {
        2 + self.vocab_size + token as usize
    }

    pub fn section_pos(&self, section: Section, bucket: usize) -> usize {
        3 + 2 * self.vocab_size + section as usize * POS_BUCKETS + bucket
    }

    /// Last digit written in the think section, or the BOS slot if none.
    pub fn scratch(&self, token: u32) -> usize {
        3 + 2 * self.vocab_size + SECTIONS * POS_BUCKETS + token as usize
    }

    pub fn prompt(&self, bucket: usize) -> usize {
        4 + 3 * self.vocab_size + SECTIONS * POS_BUCKETS + bucket
    }

    pub fn num_features(&self) -> usize {
        self.prompt(self.hash_buckets)
    }

    pub fn num_params(&self) -> usize {
        self.num_features() * self.vocab_size
    }

    /// Flat parameter index of weight `W[feature, token]`.
    pub fn param(&self, feature: usize, token: u32) -> usize {
        feature * self.vocab_size + token as usize
    }
}

/// The active `(feature, value)` pairs of one decoding context.
pub type ActiveFeatures = [(usize, f64); ACTIVE];

/// One token of a scored response, as seen by gradient code.
pub struct ScoredToken<'a> {
    pub index: usize,
    pub token: u32,
    pub features: &'a ActiveFeatures,
    /// Log-probabilities of every vocabulary item in this context.
    pub log_probs: &'a [f64],
}

/// A sampled response and the log-probability of each emitted token.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledResponse {
    pub tokens: Vec<u32>,
    pub logprobs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicySnapshot {
    pub params: Vec<f64>,
    pub vocab: Vocab,
    pub max_length: usize,
    pub hash_buckets: usize,
}

impl PolicySnapshot {
    pub fn from_params(
        vocab: Vocab,
        max_length: usize,
        hash_buckets: usize,
        params: Vec<f64>,
    ) -> Result<Self> {
        let p = Self {
            params,
            vocab,
            max_length,
            hash_buckets,
        };
        if p.params.len() != p.layout().num_params() {
            return Err(ApoError::InvalidPolicy(format!(
                "expected {} parameters, got {}",
                p.layout().num_params(),
                p.params.len()
            )));
        }
        if p.params.iter().any(|x| !x.is_finite()) {
            return Err(ApoError::InvalidPolicy("non-finite parameter".into()));
        }
        if max_length == 0 || hash_buckets == 0 {
            return Err(ApoError::InvalidPolicy("max_length and hash_buckets must be positive".into()));
        }
        Ok(p)
    }

    /// All-zero parameters: every context yields the uniform distribution.
    pub fn uniform(vocab: Vocab, max_length: usize) -> Self {
        let layout = FeatureLayout {
            vocab_size: vocab.size(),
            hash_buckets: DEFAULT_HASH_BUCKETS,
        };
        Self {
            params: vec![0.0; layout.num_params()],
            vocab,
            max_length,
            hash_buckets: DEFAULT_HASH_BUCKETS,
        }
    }

    /// Starting point for training: a policy that already follows the
    /// response template most of the time, thinks for a geometric number of
    /// tokens, and answers by copying the last digit it wrote while thinking.
    pub fn template_prior(vocab: Vocab, max_length: usize) -> Self {
        let mut p = Self::uniform(vocab, max_length);
        let layout = p.layout();
        let v = vocab.size() as u32;
        for bucket in 0..POS_BUCKETS {
            for tok in 0..v {
                let class = vocab.class(tok);
                let start = match class {
                    TokenClass::ThinkOpen => 6.0,
                    _ => 0.0,
                };
                let think = match class {
                    TokenClass::ThinkClose if bucket == 0 => -1.0,
                    TokenClass::ThinkClose => 0.7,
                    TokenClass::Digit | TokenClass::Content => 0.0,
                    _ => -4.0,
                };
                let between = match class {
                    TokenClass::AnswerOpen => 6.0,
                    _ => 0.0,
                };
                let answer = match (class, bucket) {
                    (TokenClass::Digit, 0) => 3.0,
                    (TokenClass::AnswerClose, 0) => -4.0,
                    (TokenClass::AnswerClose, _) => 5.0,
                    (TokenClass::Digit | TokenClass::Content, _) => 0.0,
                    _ => -4.0,
                };
                let done = match class {
                    TokenClass::Eos => 6.0,
                    _ => 0.0,
                };
                for (section, w) in [
                    (Section::Start, start),
                    (Section::Think, think),
                    (Section::Between, between),
                    (Section::Answer, answer),
                    (Section::Done, done),
                ] {
                    p.params[layout.param(layout.section_pos(section, bucket), tok)] = w;
                }
            }
        }
        for tok in 0..v {
            if vocab.class(tok) == TokenClass::Digit {
                p.params[layout.param(layout.scratch(tok), tok)] = COPY_PRIOR;
            }
        }
        p
    }

    /// Adds `N(0, scale^2)` noise to every parameter, reproducibly.
    pub fn perturbed(mut self, seed: u64, scale: f64) -> Self {
        let mut rng = StreamRng::derive(seed, &[crate::rng::tags::INIT]);
        for w in &mut self.params {
            *w += scale * rng.normal();
        }
        self
    }

    pub fn layout(&self) -> FeatureLayout {
        FeatureLayout {
            vocab_size: self.vocab.size(),
            hash_buckets: self.hash_buckets,
        }
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab.size()
    }

    pub fn features(&self, state: &DecodeState) -> ActiveFeatures {
        let layout = self.layout();
        let bucket = pos_bucket(state.pos_in_section);
        let scratch_slot = state.scratch.unwrap_or(self.vocab.size() as u32);
        let (hash_pos, prompt_value, scratch_value) = match state.section {
            Section::Answer => (0, 0.0, 1.0),
            Section::Think => (1 + scratch_slot as u64, PROMPT_SCALE, 0.0),
            _ => (0, PROMPT_SCALE, 0.0),
        };
        let h = derive_seed(state.prompt_key, &[state.section as u64, hash_pos]);
        [
            (layout.bias(), 1.0),
            (layout.prev(state.prev), 1.0),
            (layout.prev2(state.prev2), 1.0),
            (layout.section_pos(state.section, bucket), 1.0),
            (layout.scratch(scratch_slot), scratch_value),
            (layout.prompt((h % self.hash_buckets as u64) as usize), prompt_value),
        ]
    }

    /// Log-softmax of the logits for the given active features.
    pub fn log_probs(&self, features: &ActiveFeatures) -> Vec<f64> {
        let v = self.vocab_size();
        let mut z = vec![0.0; v];
        for &(f, x) in features {
            let row = &self.params[f * v..(f + 1) * v];
            for (zi, w) in z.iter_mut().zip(row) {
                *zi += x * w;
            }
        }
        let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + z.iter().map(|zi| (zi - max).exp()).sum::<f64>().ln();
        z.iter_mut().for_each(|zi| *zi -= lse);
        z
    }

    /// Next-token log-probabilities after `prompt` followed by `prefix`.
    pub fn next_token_logprobs(&self, prompt: &[u32], prefix: &[u32]) -> Vec<f64> {
        let mut state = DecodeState::new(self.vocab, prompt);
        for &t in prefix {
            state.advance(self.vocab, t);
        }
        self.log_probs(&self.features(&state))
    }

    /// Walks a response, handing each token's context to `visit`.
    pub fn for_each_token(
        &self,
        task: &TaskInstance,
        tokens: &[u32],
        mut visit: impl FnMut(ScoredToken<'_>),
    ) {
        let mut state = DecodeState::new(self.vocab, &task.prompt_tokens);
        for (index, &token) in tokens.iter().enumerate() {
            let features = self.features(&state);
            let log_probs = self.log_probs(&features);
            visit(ScoredToken {
                index,
                token,
                features: &features,
                log_probs: &log_probs,
            });
            state.advance(self.vocab, token);
        }
    }

    /// Exact conditional log-probability of each response token.
    pub fn score_logprob(&self, task: &TaskInstance, tokens: &[u32]) -> Vec<f64> {
        let mut out = Vec::with_capacity(tokens.len());
        self.for_each_token(task, tokens, |s| out.push(s.log_probs[s.token as usize]));
        out
    }

    /// Adds `weight * d log p(token) / d params` into `grad`.
    pub fn add_logprob_gradient(&self, step: &ScoredToken<'_>, weight: f64, grad: &mut [f64]) {
        let v = self.vocab_size();
        for &(f, x) in step.features {
            let scale = weight * x;
            if scale == 0.0 {
                continue;
            }
            let row = &mut grad[f * v..(f + 1) * v];
            for (j, (g, lp)) in row.iter_mut().zip(step.log_probs).enumerate() {
                let indicator = if j == step.token as usize { 1.0 } else { 0.0 };
                *g += scale * (indicator - lp.exp());
            }
        }
    }

    /// Ancestral sampling until end-of-sequence or `max_length` tokens.
    pub fn sample_response(&self, task: &TaskInstance, rng: &mut StreamRng) -> SampledResponse {
        let eos = self.vocab.eos();
        let mut state = DecodeState::new(self.vocab, &task.prompt_tokens);
        let mut tokens = Vec::new();
        let mut logprobs = Vec::new();
        while tokens.len() < self.max_length {
            let lp = self.log_probs(&self.features(&state));
            let u = rng.next_f64();
            let mut acc = 0.0;
            let mut choice = lp.len() - 1;
            for (j, l) in lp.iter().enumerate() {
                acc += l.exp();
                if u < acc {
                    choice = j;
                    break;
                }
            }
            tokens.push(choice as u32);
            logprobs.push(lp[choice]);
            if choice as u32 == eos {
                break;
            }
            state.advance(self.vocab, choice as u32);
        }
        SampledResponse { tokens, logprobs }
    }

    /// Mean Shannon entropy (nats) of the next-token distribution over the
    /// given `(prompt, prefix)` contexts.
    pub fn policy_entropy(&self, contexts: &[(&[u32], &[u32])]) -> f64 {
        assert!(!contexts.is_empty(), "entropy needs at least one context");
        let total: f64 = contexts
            .iter()
            .map(|(prompt, prefix)| entropy_of(&self.next_token_logprobs(prompt, prefix)))
            .sum();
        total / contexts.len() as f64
    }

    /// Sum of next-token entropies along every prefix of a response, plus
    /// the number of contexts visited.
    pub fn response_entropy_sum(&self, task: &TaskInstance, tokens: &[u32]) -> (f64, usize) {
        let mut sum = 0.0;
        self.for_each_token(task, tokens, |s| sum += entropy_of(s.log_probs));
        (sum, tokens.len())
    }
}

pub fn entropy_of(log_probs: &[f64]) -> f64 {
    log_probs
        .iter()
        .map(|&l| if l == f64::NEG_INFINITY { 0.0 } else { -l.exp() * l })
        .sum::<f64>()
        .max(0.0)
}
