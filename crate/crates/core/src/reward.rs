//! Verifiable rewards: a template check and an exact answer check, combined
//! additively as `accuracy + lambda * format`.

use serde::{Deserialize, Serialize};

pub const THINK_OPEN: &str = "<think>";
pub const THINK_CLOSE: &str = "</think>";
pub const ANSWER_OPEN: &str = "<answer>";
pub const ANSWER_CLOSE: &str = "</answer>";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub accuracy: u8,
    pub format: u8,
    pub total: f64,
}

/// 1 iff the text is `<think>…</think>` followed by `<answer>…</answer>`,
/// each tag exactly once, with only whitespace around the two sections.
pub fn check_format(response_text: &str) -> u8 {
    let tags = [THINK_OPEN, THINK_CLOSE, ANSWER_OPEN, ANSWER_CLOSE];
    if tags.iter().any(|t| response_text.matches(t).count() != 1) {
        return 0;
    }
    let pos = |t: &str| response_text.find(t).unwrap_or(usize::MAX);
    let (to, tc, ao, ac) = (
        pos(THINK_OPEN),
        pos(THINK_CLOSE),
        pos(ANSWER_OPEN),
        pos(ANSWER_CLOSE),
    );
    if !(to < tc && tc < ao && ao < ac) {
        return 0;
    }
    let blank = |s: &str| s.trim().is_empty();
    let ok = blank(&response_text[..to])
        && blank(&response_text[tc + THINK_CLOSE.len()..ao])
        && blank(&response_text[ac + ANSWER_CLOSE.len()..]);
    ok as u8
}

/// Text between the first `<answer>` and the next `</answer>`.
pub fn extract_answer(response_text: &str) -> Option<&str> {
    let start = response_text.find(ANSWER_OPEN)? + ANSWER_OPEN.len();
    let len = response_text[start..].find(ANSWER_CLOSE)?;
    Some(&response_text[start..start + len])
}

/// Trims and normalizes integer strings (`+042` → `42`, `-0` → `0`).
pub fn canonicalize_answer(s: &str) -> String {
    let s = s.trim();
    let (neg, digits) = match s.as_bytes().first() {
        Some(b'+') => (false, &s[1..]),
        Some(b'-') => (true, &s[1..]),
        _ => (false, s),
    };
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return s.to_string();
    }
    let stripped = digits.trim_start_matches('0');
    match (stripped.is_empty(), neg) {
        (true, _) => "0".to_string(),
        (false, true) => format!("-{stripped}"),
        (false, false) => stripped.to_string(),
    }
}

/// 1 iff the answer span matches the ground truth after canonicalization.
/// Independent of the format check.
pub fn check_accuracy(response_text: &str, ground_truth: &str) -> u8 {
    match extract_answer(response_text) {
        Some(ans) => (canonicalize_answer(ans) == canonicalize_answer(ground_truth)) as u8,
        None => 0,
    }
}

pub fn composite_reward(accuracy: u8, format: u8, lambda: f64) -> f64 {
    accuracy as f64 + lambda * format as f64
}

pub fn score_response(response_text: &str, ground_truth: &str, lambda: f64) -> RewardBreakdown {
    let accuracy = check_accuracy(response_text, ground_truth);
    let format = check_format(response_text);
    RewardBreakdown {
        accuracy,
        format,
        total: composite_reward(accuracy, format, lambda),
    }
}
