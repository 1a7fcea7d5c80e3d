//! Run configuration files: flat `key = value` TOML with a schema version,
//! overridable key by key through `APO_<KEY>` environment variables.

use std::collections::BTreeMap;
use std::path::Path;

use apo_core::TrainConfig;
use sha2::{Digest, Sha256};
use toml::{Table, Value};

use crate::error::{CliError, CliResult};

pub const SCHEMA_VERSION: i64 = 1;
pub const ENV_PREFIX: &str = "APO_";

/// Keys understood by the command line on top of the training config.
const RUN_KEYS: [&str; 3] = ["schema_version", "corpus", "checkpoint_every"];

#[derive(Debug, Clone, PartialEq)]
pub struct RunSettings {
    pub config: TrainConfig,
    /// Corpus path relative to the output directory.
    pub corpus: String,
    pub checkpoint_every: u64,
}

impl Default for RunSettings {
    fn default() -> Self {
        Self {
            config: TrainConfig::default(),
            corpus: "corpus.jsonl".into(),
            checkpoint_every: 1,
        }
    }
}

/// Every key a config file or the environment may set.
pub fn known_keys() -> Vec<String> {
    let defaults = serde_json::to_value(TrainConfig::default()).expect("config serializes");
    let mut keys: Vec<String> = defaults.as_object().expect("config is a map").keys().cloned().collect();
    keys.extend(RUN_KEYS.iter().map(|k| k.to_string()));
    keys.sort();
    keys
}

/// Reads `path` (if given), applies environment overrides from `env`, and
/// validates the result.
pub fn load(path: Option<&Path>, env: &BTreeMap<String, String>) -> CliResult<RunSettings> {
    let mut table = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| CliError::usage(format!("cannot read config {}: {e}", p.display())))?;
            text.parse::<Table>()
                .map_err(|e| CliError::usage(format!("{}: {e}", p.display())))?
        }
        None => Table::new(),
    };
    match table.get("schema_version") {
        Some(Value::Integer(SCHEMA_VERSION)) | None if path.is_none() => {}
        Some(Value::Integer(SCHEMA_VERSION)) => {}
        Some(other) => {
            return Err(CliError::usage(format!(
                "unsupported schema_version {other}, expected {SCHEMA_VERSION}"
            )))
        }
        None => return Err(CliError::usage("config file lacks schema_version")),
    }

    let keys = known_keys();
    for (name, raw) in env {
        let Some(key) = name.strip_prefix(ENV_PREFIX) else { continue };
        let key = key.to_ascii_lowercase();
        if !keys.contains(&key) {
            return Err(CliError::usage(format!("{name} does not name a config key")));
        }
        table.insert(key, parse_env_value(raw));
    }

    let mut settings = RunSettings::default();
    table.remove("schema_version");
    if let Some(v) = table.remove("corpus") {
        settings.corpus = v
            .as_str()
            .ok_or_else(|| CliError::usage("corpus must be a string"))?
            .to_string();
    }
    if let Some(v) = table.remove("checkpoint_every") {
        settings.checkpoint_every = v
            .as_integer()
            .filter(|&n| n > 0)
            .ok_or_else(|| CliError::usage("checkpoint_every must be a positive integer"))?
            as u64;
    }
    settings.config = Value::Table(table)
        .try_into()
        .map_err(|e| CliError::usage(format!("invalid config: {e}")))?;
    settings.config.validate()?;
    Ok(settings)
}

/// Environment values are read as TOML scalars, falling back to a string.
fn parse_env_value(raw: &str) -> Value {
    format!("v = {raw}")
        .parse::<Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()))
}

/// The `APO_*` variables of the current process.
pub fn process_env() -> BTreeMap<String, String> {
    std::env::vars().filter(|(k, _)| k.starts_with(ENV_PREFIX)).collect()
}

/// SHA-256 over the canonical JSON form of the config; changes iff a field does.
pub fn config_hash(config: &TrainConfig) -> String {
    let canonical = serde_json::to_vec(config).expect("config serializes");
    hex::encode(Sha256::digest(&canonical))
}

/// Git-style object hash (`blob <len>\0` + content), over SHA-256.
pub fn content_hash(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", bytes.len()).as_bytes());
    h.update(bytes);
    hex::encode(h.finalize())
}

/// A commented config file with every key at its default.
pub fn template() -> String {
    let defaults = RunSettings::default();
    let mut out = format!("schema_version = {SCHEMA_VERSION}\n\n# Paths are relative to --out-dir.\n");
    out.push_str(&format!("corpus = {:?}\ncheckpoint_every = {}\n\n", defaults.corpus, defaults.checkpoint_every));
    out.push_str(&toml::to_string(&defaults.config).expect("config serializes"));
    out
}
