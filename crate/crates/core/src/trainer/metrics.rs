//! Per-step diagnostics and their CSV / JSONL encodings.

use serde::{Deserialize, Serialize};

use crate::error::{ApoError, Result};

/// One row per optimizer step. Optional fields are empty in CSV when the
/// population they summarize is empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub step: u64,
    pub mean_accuracy_reward: f64,
    pub mean_format_reward: f64,
    pub mean_len_correct: Option<f64>,
    pub mean_len_incorrect: Option<f64>,
    /// Incorrect minus correct mean length.
    pub length_gap: Option<f64>,
    pub policy_entropy: f64,
    pub mean_kl: f64,
    pub clip_fraction: f64,
    pub groups_filtered_all_correct: usize,
    pub groups_zero_variance: usize,
}

pub const CSV_COLUMNS: [&str; 11] = [
    "step",
    "mean_accuracy_reward",
    "mean_format_reward",
    "mean_len_correct",
    "mean_len_incorrect",
    "length_gap",
    "policy_entropy",
    "mean_kl",
    "clip_fraction",
    "groups_filtered_all_correct",
    "groups_zero_variance",
];

pub fn csv_header() -> String {
    CSV_COLUMNS.join(",")
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

impl MetricRow {
    pub fn to_csv(&self) -> String {
        [
            self.step.to_string(),
            self.mean_accuracy_reward.to_string(),
            self.mean_format_reward.to_string(),
            opt(self.mean_len_correct),
            opt(self.mean_len_incorrect),
            opt(self.length_gap),
            self.policy_entropy.to_string(),
            self.mean_kl.to_string(),
            self.clip_fraction.to_string(),
            self.groups_filtered_all_correct.to_string(),
            self.groups_zero_variance.to_string(),
        ]
        .join(",")
    }

    pub fn from_csv(line: &str) -> Result<Self> {
        let cells: Vec<&str> = line.trim_end().split(',').collect();
        if cells.len() != CSV_COLUMNS.len() {
            return Err(ApoError::Parse(format!(
                "expected {} columns, found {}",
                CSV_COLUMNS.len(),
                cells.len()
            )));
        }
        let bad = |i: usize| ApoError::Parse(format!("bad value `{}` in column {}", cells[i], CSV_COLUMNS[i]));
        let f = |i: usize| cells[i].parse::<f64>().map_err(|_| bad(i));
        let o = |i: usize| -> Result<Option<f64>> {
            if cells[i].is_empty() {
                Ok(None)
            } else {
                f(i).map(Some)
            }
        };
        let u = |i: usize| cells[i].parse::<usize>().map_err(|_| bad(i));
        Ok(Self {
            step: cells[0].parse().map_err(|_| bad(0))?,
            mean_accuracy_reward: f(1)?,
            mean_format_reward: f(2)?,
            mean_len_correct: o(3)?,
            mean_len_incorrect: o(4)?,
            length_gap: o(5)?,
            policy_entropy: f(6)?,
            mean_kl: f(7)?,
            clip_fraction: f(8)?,
            groups_filtered_all_correct: u(9)?,
            groups_zero_variance: u(10)?,
        })
    }
}

/// Renders a full metrics CSV.
pub fn metrics_csv(rows: &[MetricRow]) -> String {
    let mut out = csv_header();
    out.push('\n');
    for r in rows {
        out.push_str(&r.to_csv());
        out.push('\n');
    }
    out
}

/// Parses a metrics CSV with a header line.
pub fn parse_metrics_csv(text: &str) -> Result<Vec<MetricRow>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim_end() == csv_header() => {}
        _ => return Err(ApoError::Parse("missing or unexpected metrics header".into())),
    }
    lines.filter(|l| !l.trim().is_empty()).map(MetricRow::from_csv).collect()
}

/// Sample standard deviation divided by the mean.
pub fn coefficient_of_variation(series: &[f64]) -> Result<f64> {
    if series.is_empty() {
        return Err(ApoError::DegenerateMean(f64::NAN));
    }
    let n = series.len() as f64;
    let mean = series.iter().sum::<f64>() / n;
    if !(mean > 0.0) {
        return Err(ApoError::DegenerateMean(mean));
    }
    if series.len() < 2 {
        return Ok(0.0);
    }
    let var = series.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    Ok(var.sqrt() / mean)
}
