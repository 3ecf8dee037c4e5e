use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::persist::{read_study, study_path, team_dir, write_study, StudyHeader};
use super::{run_study, Clock, EvalTensor, HarnessError, StudyConfig, StudyLog, SystemClock};
use crate::optimizers::{
    build_optimizer, Observation, ObservationArchive, Outcome, Provenance, StrategyConfig,
};
use crate::problems::ProblemSuite;
use crate::scoring::ProblemCalibration;

#[derive(Default)]
pub struct RunOptions<'a> {
    /// Worker threads; 0 uses all cores.
    pub workers: usize,
    /// Results directory; `None` keeps everything in memory.
    pub out: Option<PathBuf>,
    /// Ignore existing study files.
    pub fresh: bool,
    /// Prior archives keyed by problem id.
    pub warm_start: Option<&'a BTreeMap<String, ObservationArchive>>,
    /// Shared clock; defaults to a fresh wall clock per study.
    pub clock: Option<Arc<dyn Clock>>,
}

#[derive(Debug, Clone)]
pub struct TeamRun {
    pub team: String,
    pub tensor: EvalTensor,
    /// Study logs indexed `[problem][trial]`.
    pub logs: Vec<Vec<StudyLog>>,
}

impl TeamRun {
    /// Every evaluation the team made on problem `p`, crashes as `+inf`.
    pub fn pool(&self, p: usize) -> Vec<f64> {
        self.logs[p]
            .iter()
            .flat_map(|l| l.evaluations().map(|(_, o)| o.or_inf()))
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct SuiteRun {
    pub config: StudyConfig,
    pub problems: Vec<String>,
    pub teams: Vec<TeamRun>,
}

#[derive(Serialize, Deserialize)]
struct Summary {
    config: StudyConfig,
    problems: Vec<String>,
    teams: Vec<SummaryTeam>,
}

#[derive(Serialize, Deserialize)]
struct SummaryTeam {
    team: String,
    dir: String,
    /// Final best-so-far per `[problem][trial]`; `null` for no finite value.
    final_best: Vec<Vec<Option<f64>>>,
    cutoff_studies: usize,
    fallback_studies: usize,
}

impl SuiteRun {
    pub fn team(&self, id: &str) -> Option<&TeamRun> {
        self.teams.iter().find(|t| t.team == id)
    }

    /// Smallest finite loss seen on problem `p` by any team.
    pub fn observed_min(&self, p: usize) -> f64 {
        self.teams
            .iter()
            .flat_map(|t| t.pool(p))
            .filter(|v| v.is_finite())
            .fold(f64::INFINITY, f64::min)
    }

    fn summary(&self) -> Summary {
        Summary {
            config: self.config.clone(),
            problems: self.problems.clone(),
            teams: self
                .teams
                .iter()
                .map(|t| SummaryTeam {
                    team: t.team.clone(),
                    dir: team_dir(&t.team),
                    final_best: (0..self.problems.len())
                        .map(|p| {
                            (0..self.config.trials)
                                .map(|n| {
                                    let v = t
                                        .tensor
                                        .series(p, n)
                                        .into_iter()
                                        .fold(f64::INFINITY, f64::min);
                                    v.is_finite().then_some(v)
                                })
                                .collect()
                        })
                        .collect(),
                    cutoff_studies: t
                        .logs
                        .iter()
                        .flatten()
                        .filter(|l| l.records.iter().any(|r| r.cutoff))
                        .count(),
                    fallback_studies: t
                        .logs
                        .iter()
                        .flatten()
                        .filter(|l| l.records.iter().any(|r| r.fallback))
                        .count(),
                })
                .collect(),
        }
    }

    pub fn write_summary(&self, out: &Path) -> Result<(), HarnessError> {
        let path = out.join("summary.json");
        let text = serde_json::to_string_pretty(&self.summary()).expect("summary serializes");
        std::fs::create_dir_all(out)
            .and_then(|_| std::fs::write(&path, text + "\n"))
            .map_err(|source| HarnessError::Io {
                path: path.display().to_string(),
                source,
            })
    }

    /// Loads a completed run from its summary and study files.
    pub fn load(out: &Path) -> Result<Self, HarnessError> {
        let path = out.join("summary.json");
        let text = std::fs::read_to_string(&path).map_err(|source| HarnessError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let summary: Summary = serde_json::from_str(&text).map_err(|e| HarnessError::Data {
            path: path.display().to_string(),
            reason: e.to_string(),
        })?;
        let cfg = summary.config;
        let mut teams = Vec::new();
        for st in summary.teams {
            let mut tensor = EvalTensor::new(summary.problems.clone(), cfg.batches, cfg.trials);
            let mut logs = Vec::new();
            for (p, problem) in summary.problems.iter().enumerate() {
                let mut row = Vec::new();
                for n in 0..cfg.trials {
                    let sp = study_path(out, &st.team, problem, n);
                    let (_, log) = read_study(&sp)?;
                    if log.records.len() != cfg.batches {
                        return Err(HarnessError::Data {
                            path: sp.display().to_string(),
                            reason: format!(
                                "{} batch records, expected {}",
                                log.records.len(),
                                cfg.batches
                            ),
                        });
                    }
                    tensor.set_study(p, n, &log.batch_minima(), &log.cutoff_mask());
                    row.push(log);
                }
                logs.push(row);
            }
            teams.push(TeamRun {
                team: st.team,
                tensor,
                logs,
            });
        }
        Ok(Self {
            config: cfg,
            problems: summary.problems,
            teams,
        })
    }
}

/// Runs every (strategy, problem, trial) study. Unknown or invalid
/// strategies fail before anything executes.
pub fn run_suite(
    suite: &ProblemSuite,
    strategies: &[StrategyConfig],
    cfg: &StudyConfig,
    opts: &RunOptions<'_>,
) -> Result<SuiteRun, HarnessError> {
    cfg.validate()?;
    if strategies.is_empty() {
        return Err(HarnessError::Config("no optimizers given".into()));
    }
    let ids: Vec<String> = strategies.iter().map(StrategyConfig::id).collect();
    let mut seen = BTreeSet::new();
    for id in &ids {
        if !seen.insert(team_dir(id)) {
            return Err(HarnessError::Config(format!(
                "duplicate optimizer id `{id}`"
            )));
        }
    }
    let probe = suite.problems()[0].space();
    for s in strategies {
        build_optimizer(s, probe, 0)?;
    }

    let problems = suite.problems();
    let jobs: Vec<(usize, usize, usize)> = (0..strategies.len())
        .flat_map(|s| {
            (0..problems.len()).flat_map(move |p| (0..cfg.trials).map(move |n| (s, p, n)))
        })
        .collect();

    let run_job = |&(s, p, n): &(usize, usize, usize)| -> Result<StudyLog, HarnessError> {
        let problem = &problems[p];
        let team = &ids[s];
        let prior = opts.warm_start.and_then(|w| w.get(problem.id()));
        let header = StudyHeader::new(cfg, problem.id(), team, n, prior.is_some());
        let path = opts
            .out
            .as_ref()
            .map(|o| study_path(o, team, problem.id(), n));
        if let (Some(path), false) = (&path, opts.fresh) {
            if path.exists() {
                match read_study(path) {
                    Ok((h, log)) if h == header && log.records.len() == cfg.batches => {
                        return Ok(log)
                    }
                    Ok(_) => log::info!("{}: stale study file, rerunning", path.display()),
                    Err(e) => log::warn!("{e}; rerunning"),
                }
            }
        }
        let strategy = &strategies[s];
        let factory =
            |space: &crate::space::SearchSpace, seed: u64| build_optimizer(strategy, space, seed);
        let wall;
        let clock: &dyn Clock = match &opts.clock {
            Some(c) => c.as_ref(),
            None => {
                wall = SystemClock::new();
                &wall
            }
        };
        let outcome = run_study(problem, team, &factory, cfg, n, clock, prior)?;
        if let Some(path) = &path {
            write_study(path, &header, &outcome.log)?;
        }
        Ok(outcome.log)
    };

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.workers)
        .build()
        .map_err(|e| HarnessError::Config(format!("worker pool: {e}")))?;
    let logs: Vec<StudyLog> =
        pool.install(|| jobs.par_iter().map(run_job).collect::<Result<Vec<_>, _>>())?;

    let names: Vec<String> = problems.iter().map(|p| p.id().to_string()).collect();
    let mut teams: Vec<TeamRun> = ids
        .iter()
        .map(|id| TeamRun {
            team: id.clone(),
            tensor: EvalTensor::new(names.clone(), cfg.batches, cfg.trials),
            logs: vec![Vec::with_capacity(cfg.trials); problems.len()],
        })
        .collect();
    for (&(s, p, n), log) in jobs.iter().zip(logs) {
        teams[s]
            .tensor
            .set_study(p, n, &log.batch_minima(), &log.cutoff_mask());
        teams[s].logs[p].push(log);
    }
    let run = SuiteRun {
        config: cfg.clone(),
        problems: names,
        teams,
    };
    if let Some(out) = &opts.out {
        run.write_summary(out)?;
    }
    Ok(run)
}

/// For each problem, the best point of every prior study on a *different*
/// problem with the same search space, with its loss normalized by that
/// problem's calibration so scales are comparable.
pub fn harvest_warm_start(
    prior: &SuiteRun,
    suite: &ProblemSuite,
    calibrations: &BTreeMap<String, ProblemCalibration>,
) -> BTreeMap<String, ObservationArchive> {
    let mut out = BTreeMap::new();
    for target in suite.problems() {
        let sig = target.space().signature();
        let mut archive = ObservationArchive::new(sig.clone());
        for (q, qid) in prior.problems.iter().enumerate() {
            if qid == target.id() {
                continue;
            }
            let (Some(src), Some(cal)) = (suite.get(qid), calibrations.get(qid)) else {
                continue;
            };
            if src.space().signature() != sig || cal.clip <= cal.opt {
                continue;
            }
            for team in &prior.teams {
                for log in &team.logs[q] {
                    if let Some((s, v)) = log.best() {
                        let norm = (v - cal.opt) / (cal.clip - cal.opt);
                        archive.push(
                            Observation::new(s.clone(), Outcome::Loss(norm)),
                            Provenance::ThisRun,
                        );
                    }
                }
            }
        }
        if !archive.entries.is_empty() {
            out.insert(target.id().to_string(), archive);
        }
    }
    out
}
