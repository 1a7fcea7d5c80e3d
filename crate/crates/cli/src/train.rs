use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use apo_core::trainer::checkpoint::{CHECKPOINT_FILE, METRICS_CSV, METRICS_JSONL};
use apo_core::trainer::{continue_training, Checkpoint, FileRecorder};
use apo_core::types::read_jsonl;
use apo_core::{Curriculum, MetricRow, TaskInstance, TrainConfig, TrainState, Vocab};
use serde::Serialize;

use crate::error::{CliError, CliResult};
use crate::settings::{config_hash, content_hash, RunSettings};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const SUMMARY_FILE: &str = "summary.csv";

/// Rows of the component ablation: (run name, DADS, STCR, KL).
pub const ABLATION_VARIANTS: [(&str, bool, bool, bool); 5] = [
    ("grpo", false, false, false),
    ("grpo-kl", false, false, true),
    ("grpo-stcr", false, true, false),
    ("grpo-kl-dads", true, false, true),
    ("apo", true, true, true),
];

#[derive(Debug, Clone, Serialize)]
pub struct CorpusInfo {
    pub path: String,
    pub content_hash: String,
    pub tasks: usize,
}

#[derive(Debug, Serialize)]
pub struct Outputs {
    pub metrics_csv: String,
    pub metrics_jsonl: String,
    pub checkpoint: String,
}

#[derive(Debug, Serialize)]
pub struct Timings {
    pub started_unix_secs: f64,
    pub wall_secs: f64,
    pub secs_per_step: Option<f64>,
}

/// Everything needed to identify and reproduce one run.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub run: String,
    pub config_hash: String,
    pub seed: u64,
    pub start_step: u64,
    pub total_steps: u64,
    pub config: TrainConfig,
    pub corpus: CorpusInfo,
    pub outputs: Outputs,
    pub timings: Timings,
}

pub struct TrainArgs<'a> {
    pub settings: &'a RunSettings,
    pub out_dir: &'a Path,
    pub run_name: &'a str,
    pub steps: u64,
    pub resume: bool,
    pub ablation: bool,
    pub parallel: bool,
}

struct RunSpec {
    name: String,
    config: TrainConfig,
}

pub struct RunOutcome {
    pub name: String,
    pub config_hash: String,
    pub start_step: u64,
    pub rows: Vec<MetricRow>,
}

struct LoadedCorpus {
    curriculum: Curriculum,
    info: CorpusInfo,
}

fn load_corpus(out_dir: &Path, rel: &str) -> CliResult<LoadedCorpus> {
    let path = out_dir.join(rel);
    let bytes = fs::read(&path)
        .map_err(|e| CliError::missing(format!("cannot read corpus {}: {e}", path.display())))?;
    let tasks: Vec<TaskInstance> = read_jsonl(BufReader::new(&bytes[..]))
        .map_err(|e| CliError::missing(format!("corpus {}: {e}", path.display())))?;
    for t in &tasks {
        t.validate(Vocab::Standard.size())
            .map_err(|e| CliError::missing(format!("corpus {}: {e}", path.display())))?;
    }
    Ok(LoadedCorpus {
        info: CorpusInfo { path: rel.to_string(), content_hash: content_hash(&bytes), tasks: tasks.len() },
        curriculum: Curriculum::from_tasks(tasks),
    })
}

fn rel_string(path: &Path) -> String {
    path.to_string_lossy().replace('\\', "/")
}

fn run_one(args: &TrainArgs, spec: &RunSpec, corpus: &LoadedCorpus) -> CliResult<RunOutcome> {
    let rel_dir = if args.ablation {
        PathBuf::from(args.run_name).join(&spec.name)
    } else {
        PathBuf::from(args.run_name)
    };
    let dir = args.out_dir.join(&rel_dir);
    let cfg = &spec.config;
    let hash = config_hash(cfg);
    let write_err = |e: apo_core::ApoError| CliError::write(&dir, e);

    let (mut state, recorder) = if args.resume {
        let path = dir.join(CHECKPOINT_FILE);
        if !path.exists() {
            return Err(CliError::missing(format!("no checkpoint at {}", path.display())));
        }
        let ckpt = Checkpoint::load(&path)
            .map_err(|e| CliError::missing(format!("{}: {e}", path.display())))?;
        if config_hash(&ckpt.config) != hash {
            return Err(CliError::usage(format!(
                "{}: checkpoint was written with a different config",
                rel_string(&rel_dir)
            )));
        }
        if ckpt.step > args.steps {
            return Err(CliError::usage(format!(
                "{}: checkpoint is at step {}, past --steps {}",
                rel_string(&rel_dir),
                ckpt.step,
                args.steps
            )));
        }
        let state = TrainState::from_checkpoint(&ckpt)?;
        let recorder = FileRecorder::resume(&dir, cfg, ckpt.step).map_err(write_err)?;
        (state, recorder)
    } else {
        let recorder = FileRecorder::create(&dir, cfg).map_err(write_err)?;
        (TrainState::new(cfg), recorder)
    };
    let mut recorder = recorder.with_checkpoint_every(args.settings.checkpoint_every);

    let start_step = state.step;
    let started = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0);
    let clock = Instant::now();
    continue_training(&mut state, cfg, &corpus.curriculum, args.steps, &mut recorder).map_err(|e| match e {
        apo_core::ApoError::Io(_) => write_err(e),
        other => CliError::from(other),
    })?;
    recorder.write_checkpoint(&state).map_err(write_err)?;
    let wall = clock.elapsed().as_secs_f64();
    let done = args.steps - start_step;

    let manifest = RunManifest {
        run: rel_string(&rel_dir),
        config_hash: hash.clone(),
        seed: cfg.seed,
        start_step,
        total_steps: args.steps,
        config: cfg.clone(),
        corpus: corpus.info.clone(),
        outputs: Outputs {
            metrics_csv: rel_string(&rel_dir.join(METRICS_CSV)),
            metrics_jsonl: rel_string(&rel_dir.join(METRICS_JSONL)),
            checkpoint: rel_string(&rel_dir.join(CHECKPOINT_FILE)),
        },
        timings: Timings {
            started_unix_secs: started,
            wall_secs: wall,
            secs_per_step: (done > 0).then(|| wall / done as f64),
        },
    };
    let path = dir.join(MANIFEST_FILE);
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n";
    fs::write(&path, text).map_err(|e| CliError::write(&path, e))?;

    let csv = dir.join(METRICS_CSV);
    let rows = fs::read_to_string(&csv)
        .map_err(|e| CliError::missing(format!("{}: {e}", csv.display())))
        .and_then(|t| apo_core::trainer::metrics::parse_metrics_csv(&t).map_err(CliError::from))?;
    Ok(RunOutcome { name: rel_string(&rel_dir), config_hash: hash, start_step, rows })
}

fn specs(args: &TrainArgs) -> Vec<RunSpec> {
    let base = &args.settings.config;
    if !args.ablation {
        return vec![RunSpec { name: args.run_name.to_string(), config: base.clone() }];
    }
    ABLATION_VARIANTS
        .iter()
        .map(|&(name, dads, stcr, kl)| RunSpec {
            name: name.to_string(),
            config: TrainConfig { enable_dads: dads, enable_stcr: stcr, enable_kl: kl, ..base.clone() },
        })
        .collect()
}

pub fn run(args: &TrainArgs) -> CliResult<Vec<RunOutcome>> {
    let corpus = load_corpus(args.out_dir, &args.settings.corpus)?;
    if corpus.info.tasks == 0 && args.steps > 0 {
        return Err(CliError::missing(format!("corpus {} has no tasks", corpus.info.path)));
    }
    let specs = specs(args);
    let results: Vec<CliResult<RunOutcome>> = if args.parallel && specs.len() > 1 {
        std::thread::scope(|s| {
            let handles: Vec<_> = specs.iter().map(|spec| s.spawn(|| run_one(args, spec, &corpus))).collect();
            handles.into_iter().map(|h| h.join().expect("training thread panicked")).collect()
        })
    } else {
        specs.iter().map(|spec| run_one(args, spec, &corpus)).collect()
    };
    let outcomes = results.into_iter().collect::<CliResult<Vec<_>>>()?;
    if args.ablation {
        let path = args.out_dir.join(args.run_name).join(SUMMARY_FILE);
        fs::write(&path, summary_csv(&outcomes)).map_err(|e| CliError::write(&path, e))?;
    }
    Ok(outcomes)
}

/// Mean accuracy over the last quarter of the run.
pub fn final_accuracy(rows: &[MetricRow]) -> Option<f64> {
    let tail = &rows[rows.len() - rows.len().div_ceil(4)..];
    (!tail.is_empty()).then(|| tail.iter().map(|r| r.mean_accuracy_reward).sum::<f64>() / tail.len() as f64)
}

pub fn max_gap(rows: &[MetricRow]) -> Option<f64> {
    rows.iter().filter_map(|r| r.length_gap).reduce(f64::max)
}

fn cell(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

pub fn summary_csv(outcomes: &[RunOutcome]) -> String {
    let mut out = String::from("run,config_hash,steps,final_accuracy,max_length_gap,final_entropy\n");
    for o in outcomes {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            o.name,
            o.config_hash,
            o.rows.len(),
            cell(final_accuracy(&o.rows)),
            cell(max_gap(&o.rows)),
            cell(o.rows.last().map(|r| r.policy_entropy)),
        ));
    }
    out
}
