//! JSON-lines study files: a header line, then one record per batch.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{BatchRecord, HarnessError, StudyConfig, StudyLog};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyHeader {
    pub problem: String,
    pub optimizer: String,
    pub trial: usize,
    pub batches: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub anonymize: bool,
    pub total_budget: f64,
    pub per_iter_budget: f64,
    #[serde(default)]
    pub warm_start: bool,
}

impl StudyHeader {
    pub fn new(
        cfg: &StudyConfig,
        problem: &str,
        optimizer: &str,
        trial: usize,
        warm_start: bool,
    ) -> Self {
        Self {
            problem: problem.into(),
            optimizer: optimizer.into(),
            trial,
            batches: cfg.batches,
            batch_size: cfg.batch_size,
            seed: cfg.seed,
            anonymize: cfg.anonymize,
            total_budget: cfg.total_budget,
            per_iter_budget: cfg.per_iter_budget,
            warm_start,
        }
    }
}

/// Filesystem-safe directory name for a team id.
pub fn team_dir(team: &str) -> String {
    team.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || "-_.+@".contains(c) {
                c
            } else {
                '_'
            }
        })
        .collect()
}

pub fn study_path(out: &Path, team: &str, problem: &str, trial: usize) -> PathBuf {
    out.join("results")
        .join(team_dir(team))
        .join(team_dir(problem))
        .join(format!("trial-{trial}.jsonl"))
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io {
        path: path.display().to_string(),
        source,
    }
}

pub fn write_study(path: &Path, header: &StudyHeader, log: &StudyLog) -> Result<(), HarnessError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    let tmp = path.with_extension("jsonl.tmp");
    let mut buf = serde_json::to_string(header).expect("header serializes");
    buf.push('\n');
    for r in &log.records {
        buf.push_str(&serde_json::to_string(r).expect("record serializes"));
        buf.push('\n');
    }
    let mut f = fs::File::create(&tmp).map_err(io_err(&tmp))?;
    f.write_all(buf.as_bytes()).map_err(io_err(&tmp))?;
    drop(f);
    fs::rename(&tmp, path).map_err(io_err(path))
}

pub fn read_study(path: &Path) -> Result<(StudyHeader, StudyLog), HarnessError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let data = |reason: String| HarnessError::Data {
        path: path.display().to_string(),
        reason,
    };
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header: StudyHeader = serde_json::from_str(
        lines
            .next()
            .ok_or_else(|| data("empty study file".into()))?,
    )
    .map_err(|e| data(format!("bad header: {e}")))?;
    let records = lines
        .enumerate()
        .map(|(i, l)| {
            serde_json::from_str::<BatchRecord>(l).map_err(|e| data(format!("line {}: {e}", i + 2)))
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok((header, StudyLog { records }))
}
