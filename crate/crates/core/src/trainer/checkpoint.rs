//! Run persistence: a JSON checkpoint (parameters, optimizer state, config,
//! step) and append-only metrics files.

use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::metrics::{csv_header, MetricRow};
use super::optimizer::OptimizerState;
use super::{StepObserver, TrainState};
use crate::config::TrainConfig;
use crate::error::{ApoError, Result};

pub const CHECKPOINT_SCHEMA: u32 = 1;
pub const METRICS_CSV: &str = "metrics.csv";
pub const METRICS_JSONL: &str = "metrics.jsonl";
pub const CHECKPOINT_FILE: &str = "checkpoint.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub schema_version: u32,
    /// Number of completed steps.
    pub step: u64,
    pub config: TrainConfig,
    pub params: Vec<f64>,
    pub optimizer: OptimizerState,
}

impl Checkpoint {
    pub fn of(state: &TrainState, config: &TrainConfig) -> Self {
        Self {
            schema_version: CHECKPOINT_SCHEMA,
            step: state.step,
            config: config.clone(),
            params: state.current.params.clone(),
            optimizer: state.optimizer.clone(),
        }
    }

    /// Writes via a temporary file and rename.
    pub fn save(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("json.tmp");
        {
            let mut w = BufWriter::new(File::create(&tmp)?);
            serde_json::to_writer(&mut w, self)?;
            w.write_all(b"\n")?;
            w.flush()?;
        }
        fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let ckpt: Self = serde_json::from_str(&text)?;
        if ckpt.schema_version != CHECKPOINT_SCHEMA {
            return Err(ApoError::Parse(format!(
                "unsupported checkpoint schema {}",
                ckpt.schema_version
            )));
        }
        Ok(ckpt)
    }
}

/// Writes `metrics.csv`, `metrics.jsonl` and `checkpoint.json` into a run
/// directory, flushing after every step.
pub struct FileRecorder {
    dir: PathBuf,
    config: TrainConfig,
    csv: BufWriter<File>,
    jsonl: BufWriter<File>,
    checkpoint_every: u64,
}

impl FileRecorder {
    /// Starts a fresh run directory, truncating existing metrics.
    pub fn create(dir: &Path, config: &TrainConfig) -> Result<Self> {
        fs::create_dir_all(dir)?;
        let mut csv = BufWriter::new(File::create(dir.join(METRICS_CSV))?);
        writeln!(csv, "{}", csv_header())?;
        csv.flush()?;
        let jsonl = BufWriter::new(File::create(dir.join(METRICS_JSONL))?);
        Ok(Self {
            dir: dir.to_path_buf(),
            config: config.clone(),
            csv,
            jsonl,
            checkpoint_every: 1,
        })
    }

    /// Reopens a run directory for appending after `checkpoint_step`
    /// completed steps, dropping any rows logged past the checkpoint.
    pub fn resume(dir: &Path, config: &TrainConfig, checkpoint_step: u64) -> Result<Self> {
        let csv_path = dir.join(METRICS_CSV);
        let jsonl_path = dir.join(METRICS_JSONL);
        let csv_text = fs::read_to_string(&csv_path)?;
        let mut kept = String::new();
        for (i, line) in csv_text.lines().enumerate() {
            if i == 0 {
                kept.push_str(line);
                kept.push('\n');
                continue;
            }
            if MetricRow::from_csv(line)?.step < checkpoint_step {
                kept.push_str(line);
                kept.push('\n');
            }
        }
        fs::write(&csv_path, kept)?;
        let jsonl_text = fs::read_to_string(&jsonl_path).unwrap_or_default();
        let mut kept = String::new();
        for line in jsonl_text.lines().filter(|l| !l.trim().is_empty()) {
            let row: MetricRow = serde_json::from_str(line)?;
            if row.step < checkpoint_step {
                kept.push_str(line);
                kept.push('\n');
            }
        }
        fs::write(&jsonl_path, kept)?;
        let open = |p: &Path| OpenOptions::new().append(true).open(p);
        Ok(Self {
            dir: dir.to_path_buf(),
            config: config.clone(),
            csv: BufWriter::new(open(&csv_path)?),
            jsonl: BufWriter::new(open(&jsonl_path)?),
            checkpoint_every: 1,
        })
    }

    pub fn with_checkpoint_every(mut self, every: u64) -> Self {
        self.checkpoint_every = every.max(1);
        self
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn write_checkpoint(&self, state: &TrainState) -> Result<()> {
        Checkpoint::of(state, &self.config).save(&self.dir.join(CHECKPOINT_FILE))
    }
}

impl StepObserver for FileRecorder {
    fn on_step(&mut self, state: &TrainState) -> Result<()> {
        if let Some(row) = state.metrics_log.last() {
            writeln!(self.csv, "{}", row.to_csv())?;
            serde_json::to_writer(&mut self.jsonl, row)?;
            self.jsonl.write_all(b"\n")?;
            self.csv.flush()?;
            self.jsonl.flush()?;
        }
        if state.step.is_multiple_of(self.checkpoint_every) {
            self.write_checkpoint(state)?;
        }
        Ok(())
    }
}
