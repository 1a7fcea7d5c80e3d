use std::fs;
use std::path::Path;

use apo_core::types::write_jsonl;
use apo_core::{generate_corpus, TaskFamily};

use crate::error::{CliError, CliResult};

/// Parses `a..b` (inclusive), `a..=b`, a comma list, or a single tier.
pub fn parse_tiers(spec: &str) -> Result<Vec<u32>, String> {
    let num = |s: &str| s.trim().parse::<u32>().map_err(|_| format!("`{s}` is not a tier number"));
    if let Some((a, b)) = spec.split_once("..") {
        let (lo, hi) = (num(a)?, num(b.strip_prefix('=').unwrap_or(b))?);
        if lo > hi {
            return Err(format!("empty tier range `{spec}`"));
        }
        return Ok((lo..=hi).collect());
    }
    let tiers = spec.split(',').map(num).collect::<Result<Vec<_>, _>>()?;
    let mut seen = tiers.clone();
    seen.sort_unstable();
    seen.dedup();
    if seen.len() != tiers.len() {
        return Err(format!("duplicate tier in `{spec}`"));
    }
    Ok(tiers)
}

pub struct GenCorpus<'a> {
    pub family: TaskFamily,
    pub tiers: &'a [u32],
    pub per_tier: usize,
    pub seed: u64,
    pub out_dir: &'a Path,
    pub output: &'a Path,
}

/// Writes the corpus and returns `(tier, count)` per tier.
pub fn run(args: &GenCorpus) -> CliResult<Vec<(u32, usize)>> {
    let tasks = generate_corpus(args.family, args.tiers, args.per_tier, args.seed);
    let mut bytes = Vec::new();
    write_jsonl(&mut bytes, &tasks)?;
    let path = args.out_dir.join(args.output);
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| CliError::write(parent, e))?;
    }
    fs::write(&path, bytes).map_err(|e| CliError::write(&path, e))?;
    Ok(args
        .tiers
        .iter()
        .map(|&t| (t, tasks.iter().filter(|x| x.difficulty_tier == t).count()))
        .collect())
}
