use std::path::Path;

use bbo_arena::analysis::{sample_rs_pool, TrialPools};
use bbo_arena::harness::StudyConfig;
use bbo_arena::problems::ProblemSuite;
use serde::{Deserialize, Serialize};

use crate::{read_json, to_json, write_file, CliError};

pub const RS_POOL_FILE: &str = "rs_pool.json";
pub const DEFAULT_RS_POOL: usize = 1024;

/// Random-search losses per problem and trial split; `null` marks a crash.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RsPool {
    pub seed: u64,
    pub trials: usize,
    pub per_trial: usize,
    pub problems: Vec<String>,
    pub pools: Vec<Vec<Vec<Option<f64>>>>,
}

impl RsPool {
    pub fn sample(suite: &ProblemSuite, cfg: &StudyConfig, per_trial: usize) -> Self {
        let pools = suite
            .problems()
            .iter()
            .map(|p| {
                sample_rs_pool(p, cfg, per_trial)
                    .into_iter()
                    .map(|t| t.into_iter().map(|v| v.is_finite().then_some(v)).collect())
                    .collect()
            })
            .collect();
        Self {
            seed: cfg.seed,
            trials: cfg.trials,
            per_trial,
            problems: suite
                .problems()
                .iter()
                .map(|p| p.id().to_string())
                .collect(),
            pools,
        }
    }

    fn matches(&self, suite: &ProblemSuite, cfg: &StudyConfig, per_trial: usize) -> bool {
        self.seed == cfg.seed
            && self.trials == cfg.trials
            && self.per_trial == per_trial
            && self
                .problems
                .iter()
                .map(String::as_str)
                .eq(suite.problems().iter().map(|p| p.id()))
    }

    /// Losses with crashes as `+inf`.
    pub fn losses(&self) -> Vec<TrialPools> {
        self.pools
            .iter()
            .map(|p| {
                p.iter()
                    .map(|t| t.iter().map(|v| v.unwrap_or(f64::INFINITY)).collect())
                    .collect()
            })
            .collect()
    }

    /// Best finite loss per problem.
    pub fn minima(&self) -> Vec<f64> {
        self.pools
            .iter()
            .map(|p| {
                p.iter()
                    .flatten()
                    .flatten()
                    .copied()
                    .fold(f64::INFINITY, f64::min)
            })
            .collect()
    }

    pub fn load(out: &Path) -> Result<Option<Self>, CliError> {
        let path = out.join(RS_POOL_FILE);
        if !path.is_file() {
            return Ok(None);
        }
        read_json(&path).map(Some)
    }

    /// Reuses a matching pool from any of `dirs` (first wins) unless `fresh`,
    /// else samples a new one. The result is written to `out`.
    pub fn load_or_sample(
        out: &Path,
        dirs: &[&Path],
        fresh: bool,
        suite: &ProblemSuite,
        cfg: &StudyConfig,
        per_trial: usize,
    ) -> Result<Self, CliError> {
        if !fresh {
            for dir in dirs {
                if let Ok(Some(p)) = Self::load(dir) {
                    if p.matches(suite, cfg, per_trial) {
                        if *dir != out {
                            write_file(&out.join(RS_POOL_FILE), &to_json(&p))?;
                        }
                        return Ok(p);
                    }
                }
            }
        }
        log::info!("sampling {per_trial} random-search points per trial split");
        let pool = Self::sample(suite, cfg, per_trial);
        write_file(&out.join(RS_POOL_FILE), &to_json(&pool))?;
        Ok(pool)
    }
}
