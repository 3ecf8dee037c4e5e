//! Command implementations behind the `bbo-arena` binary. Each command reads
//! and writes plain files under a results directory, so every step can be
//! rerun or resumed on its own.

mod error;
mod leaderboard;
mod rs_pool;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use bbo_arena::analysis::{
    analyze, bootstrap_change, final_clipped, AnalysisReport, BootstrapConfig, ScoreChange,
    TeamFinals,
};
use bbo_arena::harness::{harvest_warm_start, run_suite, RunOptions, StudyConfig, SuiteRun};
use bbo_arena::optimizers::{parse_strategy, StrategyConfig};
use bbo_arena::problems::{ProblemSuite, SuiteManifest, REFERENCE_SUITE_JSON};
use bbo_arena::scoring::{
    load_or_calibrate, score_team, scores_csv, CalibrationCache, ProblemCalibration, ScoreReport,
};
use serde::{Deserialize, Serialize};

pub use error::CliError;
pub use leaderboard::{build_leaderboard, Leaderboard, LeaderboardRow, CSV_HEADER, RS_TEAM};
pub use rs_pool::{RsPool, DEFAULT_RS_POOL, RS_POOL_FILE};

/// Overrides the calibration cache directory.
pub const CACHE_ENV: &str = "BBO_ARENA_CACHE";
pub const DEFAULT_OPTIMIZERS: &str = "random-search,turbo-lite,gp-ei,de";
/// Subdirectory of a results directory that holds a warm-start rerun.
pub const WARMSTART_DIR: &str = "warmstart";

/// Where the problem suite comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum SuiteSource {
    Reference,
    File(PathBuf),
    Inline(serde_json::Value),
}

impl SuiteSource {
    /// `reference` names the bundled suite, anything else is a path.
    pub fn from_arg(arg: &str) -> Self {
        if arg == "reference" {
            SuiteSource::Reference
        } else {
            SuiteSource::File(PathBuf::from(arg))
        }
    }

    /// The manifest as JSON plus the built suite.
    pub fn load(&self) -> Result<(serde_json::Value, ProblemSuite), CliError> {
        let (origin, value) = match self {
            SuiteSource::Reference => (
                "bundled reference suite".to_string(),
                serde_json::from_str(REFERENCE_SUITE_JSON).expect("bundled suite parses"),
            ),
            SuiteSource::File(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| {
                    CliError::Config(format!("cannot read suite file {}: {e}", path.display()))
                })?;
                let v: serde_json::Value = serde_json::from_str(&text)
                    .map_err(|e| CliError::Config(format!("suite file {}: {e}", path.display())))?;
                (path.display().to_string(), v)
            }
            SuiteSource::Inline(v) => ("inline suite".to_string(), v.clone()),
        };
        let manifest: SuiteManifest = serde_json::from_value(value.clone())
            .map_err(|e| CliError::Config(format!("{origin}: invalid suite manifest: {e}")))?;
        let suite = manifest
            .build()
            .map_err(|e| CliError::Config(format!("{origin}: {e}")))?;
        Ok((value, suite))
    }
}

/// Comma-separated registry ids, or a path to a JSON file holding one
/// strategy config or an array of them.
pub fn parse_optimizers(arg: &str) -> Result<Vec<StrategyConfig>, CliError> {
    let path = Path::new(arg);
    if arg.ends_with(".json") || path.is_file() {
        let text = std::fs::read_to_string(path).map_err(|e| {
            CliError::Config(format!(
                "cannot read optimizer config {}: {e}",
                path.display()
            ))
        })?;
        let v: serde_json::Value = serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("optimizer config {}: {e}", path.display())))?;
        let list = match v {
            serde_json::Value::Array(items) => items,
            single => vec![single],
        };
        return list
            .into_iter()
            .map(|item| {
                serde_json::from_value(item).map_err(|e| {
                    CliError::Config(format!("optimizer config {}: {e}", path.display()))
                })
            })
            .collect();
    }
    let strategies: Vec<StrategyConfig> = arg
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse_strategy(s).map_err(CliError::from))
        .collect::<Result<_, _>>()?;
    if strategies.is_empty() {
        return Err(CliError::Config("no optimizers given".into()));
    }
    Ok(strategies)
}

/// Everything needed to run one experiment.
#[derive(Debug, Clone)]
pub struct ExperimentManifest {
    pub suite: SuiteSource,
    pub strategies: Vec<StrategyConfig>,
    pub config: StudyConfig,
    pub out: PathBuf,
    pub workers: usize,
    pub fresh: bool,
    pub rs_samples: usize,
    /// Random-search draws per problem and trial split for the RS curve.
    pub rs_pool: usize,
    /// Results directory of a prior run to harvest warm-start archives from.
    pub warm_start: Option<PathBuf>,
}

impl ExperimentManifest {
    pub fn new(
        suite: SuiteSource,
        strategies: Vec<StrategyConfig>,
        out: impl Into<PathBuf>,
    ) -> Self {
        Self {
            suite,
            strategies,
            config: StudyConfig::default(),
            out: out.into(),
            workers: 0,
            fresh: false,
            rs_samples: bbo_arena::scoring::DEFAULT_RS_SAMPLES,
            rs_pool: DEFAULT_RS_POOL,
            warm_start: None,
        }
    }
}

/// What `run` records next to its results so later commands can rebuild it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentRecord {
    pub suite: serde_json::Value,
    pub strategies: Vec<StrategyConfig>,
    pub config: StudyConfig,
    pub rs_samples: usize,
    #[serde(default = "default_rs_pool")]
    pub rs_pool: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub warm_start_from: Option<String>,
}

fn default_rs_pool() -> usize {
    DEFAULT_RS_POOL
}

pub struct RunArtifacts {
    pub run: SuiteRun,
    pub pool: Option<RsPool>,
    pub calibrations: Vec<ProblemCalibration>,
    pub reports: Vec<ScoreReport>,
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)
            .map_err(|e| CliError::Data(format!("cannot create {}: {e}", dir.display())))?;
    }
    std::fs::write(path, text)
        .map_err(|e| CliError::Data(format!("cannot write {}: {e}", path.display())))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Data(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn to_json<T: Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("output serializes") + "\n"
}

fn check_rs_samples(n: usize) -> Result<(), CliError> {
    if n < bbo_arena::scoring::MIN_RS_SAMPLES {
        return Err(CliError::Config(format!(
            "at least {} calibration samples are required, got {n}",
            bbo_arena::scoring::MIN_RS_SAMPLES
        )));
    }
    Ok(())
}

/// `$BBO_ARENA_CACHE`, else `<out>/cache`.
pub fn cache_dir(out: &Path) -> PathBuf {
    match std::env::var_os(CACHE_ENV) {
        Some(dir) if !dir.is_empty() => PathBuf::from(dir),
        _ => out.join("cache"),
    }
}

/// Calibrates every problem (through the cache). Unknown optima become the
/// best loss seen in `runs` and `pools`; the calibration minimum is only a
/// fallback for problems nothing was observed on.
pub fn calibrate_suite(
    suite: &ProblemSuite,
    seed: u64,
    rs_samples: usize,
    cache: &CalibrationCache,
    runs: &[&SuiteRun],
    pools: &[&RsPool],
) -> Result<Vec<ProblemCalibration>, CliError> {
    suite
        .problems()
        .iter()
        .map(|p| {
            let cal = load_or_calibrate(p, seed, rs_samples, Some(cache))?;
            let from_runs = runs.iter().filter_map(|r| {
                r.problems
                    .iter()
                    .position(|id| id == p.id())
                    .map(|i| r.observed_min(i))
            });
            let from_pools = pools.iter().filter_map(|pool| {
                pool.problems
                    .iter()
                    .position(|id| id == p.id())
                    .map(|i| pool.minima()[i])
            });
            let seen = from_runs.chain(from_pools).fold(f64::INFINITY, f64::min);
            Ok(cal.with_experiment_min(seen))
        })
        .collect()
}

type Harvest = (
    SuiteRun,
    Option<RsPool>,
    BTreeMap<String, bbo_arena::optimizers::ObservationArchive>,
);

fn harvest_from(
    dir: &Path,
    suite: &ProblemSuite,
    seed: u64,
    rs_samples: usize,
    cache: &CalibrationCache,
) -> Option<Harvest> {
    let prior = match SuiteRun::load(dir) {
        Ok(r) => r,
        Err(e) => {
            log::warn!("no prior results to warm start from ({e}); running cold");
            return None;
        }
    };
    let pool = RsPool::load(dir).ok().flatten();
    let cals = match calibrate_suite(
        suite,
        seed,
        rs_samples,
        cache,
        &[&prior],
        &pool.iter().collect::<Vec<_>>(),
    ) {
        Ok(c) => c,
        Err(e) => {
            log::warn!("cannot calibrate prior problems ({e}); running cold");
            return None;
        }
    };
    let by_id = cals.into_iter().map(|c| (c.problem.clone(), c)).collect();
    let archives = harvest_warm_start(&prior, suite, &by_id);
    if archives.is_empty() {
        log::warn!(
            "prior run at {} offers no warm-start archives; running cold",
            dir.display()
        );
    }
    Some((prior, pool, archives))
}

/// Runs the suite (resuming finished studies unless `fresh`), calibrates,
/// and writes `experiment.json`, `calibration.json`, `scores.csv` and
/// `scores.json` under `out`.
pub fn cmd_run(m: &ExperimentManifest) -> Result<RunArtifacts, CliError> {
    let (suite_json, suite) = m.suite.load()?;
    if m.strategies.is_empty() {
        return Err(CliError::Config("no optimizers given".into()));
    }
    m.config.validate()?;
    check_rs_samples(m.rs_samples)?;
    if m.rs_pool < m.config.evaluations() {
        return Err(CliError::Config(format!(
            "the random-search pool needs at least {} draws per trial (the study budget), got {}",
            m.config.evaluations(),
            m.rs_pool
        )));
    }
    let cache = CalibrationCache::new(cache_dir(&m.out));
    let prior = m
        .warm_start
        .as_ref()
        .and_then(|dir| harvest_from(dir, &suite, m.config.seed, m.rs_samples, &cache));

    let opts = RunOptions {
        workers: m.workers,
        out: Some(m.out.clone()),
        fresh: m.fresh,
        warm_start: prior.as_ref().map(|(_, _, a)| a),
        clock: None,
    };
    let run = run_suite(&suite, &m.strategies, &m.config, &opts)?;
    let pool = match run.team(RS_TEAM) {
        Some(_) => {
            let mut dirs = vec![m.out.as_path()];
            dirs.extend(m.warm_start.as_deref());
            Some(RsPool::load_or_sample(
                &m.out, &dirs, m.fresh, &suite, &m.config, m.rs_pool,
            )?)
        }
        None => None,
    };

    let mut seen = vec![&run];
    let mut pools: Vec<&RsPool> = pool.iter().collect();
    if let Some((p, prior_pool, _)) = &prior {
        seen.push(p);
        pools.extend(prior_pool.iter());
    }
    let calibrations = calibrate_suite(&suite, m.config.seed, m.rs_samples, &cache, &seen, &pools)?;
    let reports: Vec<ScoreReport> = run
        .teams
        .iter()
        .map(|t| score_team(&t.team, &t.tensor, &calibrations))
        .collect::<Result<_, _>>()?;

    let record = ExperimentRecord {
        suite: suite_json,
        strategies: m.strategies.clone(),
        config: m.config.clone(),
        rs_samples: m.rs_samples,
        rs_pool: m.rs_pool,
        warm_start_from: m.warm_start.as_ref().map(|p| p.display().to_string()),
    };
    write_file(&m.out.join("experiment.json"), &to_json(&record))?;
    write_file(&m.out.join("calibration.json"), &to_json(&calibrations))?;
    write_file(&m.out.join("scores.csv"), &scores_csv(&reports))?;
    write_file(&m.out.join("scores.json"), &to_json(&reports))?;
    Ok(RunArtifacts {
        run,
        pool,
        calibrations,
        reports,
    })
}

/// A finished run with its calibrations and random-search pool.
pub struct LoadedResults {
    pub run: SuiteRun,
    pub calibrations: Vec<ProblemCalibration>,
    pub pool: Option<RsPool>,
}

/// Loads a finished run, its calibrations and its random-search pool.
pub fn load_results(out: &Path) -> Result<LoadedResults, CliError> {
    if !out.join("summary.json").is_file() {
        return Err(CliError::Data(format!(
            "no results in {} (summary.json missing)",
            out.display()
        )));
    }
    let run = SuiteRun::load(out)?;
    let cals: Vec<ProblemCalibration> = read_json(&out.join("calibration.json"))?;
    let ids: Vec<&str> = cals.iter().map(|c| c.problem.as_str()).collect();
    if ids != run.problems.iter().map(String::as_str).collect::<Vec<_>>() {
        return Err(CliError::Data(format!(
            "{}: calibration problems do not match the results",
            out.join("calibration.json").display()
        )));
    }
    let pool = RsPool::load(out)?;
    Ok(LoadedResults {
        run,
        calibrations: cals,
        pool,
    })
}

/// Writes `leaderboard.csv`, `leaderboard.json` and, with a random-search
/// pool, `rs_curve.csv`.
pub fn cmd_leaderboard(out: &Path) -> Result<Leaderboard, CliError> {
    let r = load_results(out)?;
    let (lb, curve) = build_leaderboard(&r.run, &r.calibrations, r.pool.as_ref())?;
    write_file(&out.join("leaderboard.csv"), &lb.to_csv())?;
    write_file(&out.join("leaderboard.json"), &to_json(&lb))?;
    if let Some(c) = curve {
        write_file(&out.join("rs_curve.csv"), &c.to_csv())?;
    }
    Ok(lb)
}

/// Bootstrap report written to `analysis.json`.
pub fn cmd_analyze(out: &Path, cfg: &BootstrapConfig) -> Result<AnalysisReport, CliError> {
    cfg.validate()?;
    let r = load_results(out)?;
    let (_, curve) = build_leaderboard(&r.run, &r.calibrations, r.pool.as_ref())?;
    let teams: Vec<(String, &bbo_arena::harness::EvalTensor)> = r
        .run
        .teams
        .iter()
        .map(|t| (t.team.clone(), &t.tensor))
        .collect();
    let report = analyze(
        &teams,
        &r.calibrations,
        cfg,
        curve.as_ref(),
        r.run.config.evaluations(),
    )?;
    write_file(&out.join("analysis.json"), &to_json(&report))?;
    Ok(report)
}

/// Cold versus warm scores of one team, both under the rerun's calibrations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WarmComparison {
    pub team: String,
    pub cold: f64,
    pub warm: f64,
    pub change: ScoreChange,
}

pub struct WarmstartArtifacts {
    pub artifacts: RunArtifacts,
    pub leaderboard: Leaderboard,
    pub comparisons: Vec<WarmComparison>,
}

/// Overrides applied on top of a prior run's recorded experiment.
#[derive(Debug, Clone, Default)]
pub struct RerunOverrides {
    pub suite: Option<SuiteSource>,
    pub strategies: Option<Vec<StrategyConfig>>,
    pub config: Option<StudyConfig>,
    pub anonymize: bool,
    pub workers: usize,
    pub fresh: bool,
}

/// Reruns a finished experiment with parameter names visible (unless
/// overridden) and prior archives offered to every optimizer. Results go to
/// `<prior>/warmstart`; `comparison.json` holds per-team score changes with
/// bootstrap intervals.
pub fn cmd_warmstart_rerun(
    prior_dir: &Path,
    over: &RerunOverrides,
    bootstrap: &BootstrapConfig,
) -> Result<WarmstartArtifacts, CliError> {
    bootstrap.validate()?;
    let record: Option<ExperimentRecord> = match read_json(&prior_dir.join("experiment.json")) {
        Ok(r) => Some(r),
        Err(e) => {
            log::warn!("{e}");
            None
        }
    };
    let suite = match (&over.suite, &record) {
        (Some(s), _) => s.clone(),
        (None, Some(r)) => SuiteSource::Inline(r.suite.clone()),
        (None, None) => {
            return Err(CliError::Config(format!(
                "no experiment.json in {}; pass --suite",
                prior_dir.display()
            )))
        }
    };
    let strategies = match (&over.strategies, &record) {
        (Some(s), _) => s.clone(),
        (None, Some(r)) => r.strategies.clone(),
        (None, None) => parse_optimizers(DEFAULT_OPTIMIZERS)?,
    };
    let mut config = over
        .config
        .clone()
        .or_else(|| record.as_ref().map(|r| r.config.clone()))
        .unwrap_or_default();
    config.anonymize = over.anonymize;
    let out = prior_dir.join(WARMSTART_DIR);
    let m = ExperimentManifest {
        suite,
        strategies,
        config,
        out: out.clone(),
        workers: over.workers,
        fresh: over.fresh,
        rs_samples: record
            .as_ref()
            .map_or(bbo_arena::scoring::DEFAULT_RS_SAMPLES, |r| r.rs_samples),
        rs_pool: record.as_ref().map_or(DEFAULT_RS_POOL, |r| r.rs_pool),
        warm_start: Some(prior_dir.to_path_buf()),
    };
    let artifacts = cmd_run(&m)?;
    let (leaderboard, curve) = build_leaderboard(
        &artifacts.run,
        &artifacts.calibrations,
        artifacts.pool.as_ref(),
    )?;
    write_file(&out.join("leaderboard.csv"), &leaderboard.to_csv())?;
    write_file(&out.join("leaderboard.json"), &to_json(&leaderboard))?;
    if let Some(c) = curve {
        write_file(&out.join("rs_curve.csv"), &c.to_csv())?;
    }

    let mut comparisons = Vec::new();
    if let Ok(cold_run) = SuiteRun::load(prior_dir) {
        if cold_run.problems == artifacts.run.problems
            && cold_run.config.trials == artifacts.run.config.trials
        {
            let cals = &artifacts.calibrations;
            for warm in &artifacts.run.teams {
                let Some(cold) = cold_run.team(&warm.team) else {
                    continue;
                };
                let finals = |t: &bbo_arena::harness::EvalTensor| -> Result<TeamFinals, CliError> {
                    Ok(TeamFinals {
                        team: warm.team.clone(),
                        finals: final_clipped(t, cals)?,
                    })
                };
                let change = bootstrap_change(
                    &finals(&cold.tensor)?,
                    &finals(&warm.tensor)?,
                    cals,
                    bootstrap,
                )?;
                comparisons.push(WarmComparison {
                    team: warm.team.clone(),
                    cold: score_team(&warm.team, &cold.tensor, cals)?.score,
                    warm: score_team(&warm.team, &warm.tensor, cals)?.score,
                    change,
                });
            }
        } else {
            log::warn!("prior run has a different shape; skipping cold/warm comparison");
        }
    }
    write_file(&out.join("comparison.json"), &to_json(&comparisons))?;
    Ok(WarmstartArtifacts {
        artifacts,
        leaderboard,
        comparisons,
    })
}

/// Calibrations for a suite, written to `<out>/calibration.json` when `out`
/// is given.
pub fn cmd_calibrate(
    suite: &SuiteSource,
    seed: u64,
    rs_samples: usize,
    out: Option<&Path>,
) -> Result<Vec<ProblemCalibration>, CliError> {
    check_rs_samples(rs_samples)?;
    let (_, suite) = suite.load()?;
    let base = out.map_or_else(|| PathBuf::from("."), Path::to_path_buf);
    let cache = CalibrationCache::new(cache_dir(&base));
    let cals = calibrate_suite(&suite, seed, rs_samples, &cache, &[], &[])?;
    if let Some(dir) = out {
        write_file(&dir.join("calibration.json"), &to_json(&cals))?;
    }
    Ok(cals)
}
