use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use apo_core::trainer::checkpoint::METRICS_CSV;
use apo_core::trainer::metrics::parse_metrics_csv;
use apo_core::MetricRow;

use crate::error::{CliError, CliResult};
use crate::svg::{render, Series};

pub const PLOT_DIR: &str = "plots";
pub const SERIES_CSV: &str = "series.csv";

fn cell(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

pub fn load_rows(out_dir: &Path, run: &str) -> CliResult<Vec<MetricRow>> {
    let path = out_dir.join(run).join(METRICS_CSV);
    let text = fs::read_to_string(&path)
        .map_err(|e| CliError::missing(format!("cannot read {}: {e}", path.display())))?;
    let rows = parse_metrics_csv(&text)
        .map_err(|e| CliError::missing(format!("{}: {e}", path.display())))?;
    if rows.is_empty() {
        return Err(CliError::missing(format!("{} has no rows", path.display())));
    }
    Ok(rows)
}

/// Running maximum over the defined values; stays undefined until the
/// first defined value.
pub fn running_max(values: &[Option<f64>]) -> Vec<Option<f64>> {
    let mut best: Option<f64> = None;
    values
        .iter()
        .map(|v| {
            if let Some(v) = v {
                best = Some(best.map_or(*v, |b| b.max(*v)));
            }
            best
        })
        .collect()
}

fn points(rows: &[MetricRow], f: impl Fn(&MetricRow) -> Option<f64>) -> Vec<(f64, Option<f64>)> {
    rows.iter().map(|r| (r.step as f64, f(r))).collect()
}

fn write(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(|e| CliError::write(path, e))
}

/// Writes the series CSV and one SVG per series under `<run>/plots`.
pub fn plot_run(out_dir: &Path, run: &str) -> CliResult<Vec<PathBuf>> {
    let rows = load_rows(out_dir, run)?;
    let rel = Path::new(run).join(PLOT_DIR);
    let dir = out_dir.join(&rel);
    fs::create_dir_all(&dir).map_err(|e| CliError::write(&dir, e))?;

    let gaps: Vec<Option<f64>> = rows.iter().map(|r| r.length_gap).collect();
    let gap_max = running_max(&gaps);
    let mut csv = String::from("step,length_gap,length_gap_running_max,policy_entropy,mean_accuracy_reward,mean_kl\n");
    for (i, r) in rows.iter().enumerate() {
        csv.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.step,
            cell(r.length_gap),
            cell(gap_max[i]),
            r.policy_entropy,
            r.mean_accuracy_reward,
            r.mean_kl
        ));
    }
    let mut written = vec![rel.join(SERIES_CSV)];
    write(&dir.join(SERIES_CSV), &csv)?;

    let steps: Vec<f64> = rows.iter().map(|r| r.step as f64).collect();
    let gap_series = vec![
        Series::new("length gap", points(&rows, |r| r.length_gap)),
        Series::new("running max", steps.iter().copied().zip(gap_max.iter().copied()).collect()).dashed(),
    ];
    let charts = [
        ("length_gap.svg", "Incorrect minus correct response length", "tokens", gap_series),
        ("entropy.svg", "Policy entropy", "nats per token", vec![Series::new("entropy", points(&rows, |r| Some(r.policy_entropy)))]),
        ("accuracy.svg", "Mean accuracy reward", "accuracy", vec![Series::new("accuracy", points(&rows, |r| Some(r.mean_accuracy_reward)))]),
        ("mean_kl.svg", "Mean KL to reference", "KL", vec![Series::new("mean KL", points(&rows, |r| Some(r.mean_kl)))]),
    ];
    for (file, title, y, series) in charts {
        write(&dir.join(file), &render(&format!("{run}: {title}"), "step", y, &series))?;
        written.push(rel.join(file));
    }
    Ok(written)
}

fn slug(run: &str) -> String {
    run.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' }).collect()
}

/// Overlays the length-gap series of two runs under `compare/`.
pub fn plot_compare(out_dir: &Path, a: &str, b: &str) -> CliResult<Vec<PathBuf>> {
    let (ra, rb) = (load_rows(out_dir, a)?, load_rows(out_dir, b)?);
    let rel = PathBuf::from("compare");
    let dir = out_dir.join(&rel);
    fs::create_dir_all(&dir).map_err(|e| CliError::write(&dir, e))?;
    let stem = format!("{}_vs_{}", slug(a), slug(b));

    let mut by_step: BTreeMap<u64, (Option<f64>, Option<f64>)> = BTreeMap::new();
    for r in &ra {
        by_step.entry(r.step).or_default().0 = r.length_gap;
    }
    for r in &rb {
        by_step.entry(r.step).or_default().1 = r.length_gap;
    }
    let mut csv = format!("step,{a}_length_gap,{b}_length_gap\n");
    for (step, (ga, gb)) in &by_step {
        csv.push_str(&format!("{step},{},{}\n", cell(*ga), cell(*gb)));
    }
    let csv_name = format!("{stem}.csv");
    write(&dir.join(&csv_name), &csv)?;

    let series = [
        Series::new(a, points(&ra, |r| r.length_gap)),
        Series::new(b, points(&rb, |r| r.length_gap)),
    ];
    let svg_name = format!("{stem}.svg");
    write(&dir.join(&svg_name), &render("Length gap", "step", "tokens", &series))?;
    Ok(vec![rel.join(csv_name), rel.join(svg_name)])
}
