//! Study execution: the suggest / evaluate / observe loop under time budgets.

mod persist;
mod suite;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::optimizers::random::RandomSearch;
use crate::optimizers::{
    Observation, ObservationArchive, Optimizer, OptimizerError, Outcome, WarmStartOutcome,
};
use crate::problems::{EvalError, Problem};
use crate::seed::SeedKey;
use crate::space::{AnonymizationMap, SearchSpace, Suggestion};

pub use persist::{read_study, study_path, write_study, StudyHeader};
pub use suite::{harvest_warm_start, run_suite, RunOptions, SuiteRun, TeamRun};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Optimizer(#[from] OptimizerError),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("data error in {path}: {reason}")]
    Data { path: String, reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    /// Number of batches `T`.
    pub batches: usize,
    /// Suggestions per batch `k`.
    pub batch_size: usize,
    /// Repeated trials `N`.
    pub trials: usize,
    /// Seconds of suggest time allowed per study.
    pub total_budget: f64,
    /// Seconds allowed for a single suggest call.
    pub per_iter_budget: f64,
    pub seed: u64,
    #[serde(default)]
    pub anonymize: bool,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self {
            batches: 16,
            batch_size: 8,
            trials: 10,
            total_budget: 640.0,
            per_iter_budget: 40.0,
            seed: 0,
            anonymize: false,
        }
    }
}

impl StudyConfig {
    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: &str| Err(HarnessError::Config(m.to_string()));
        if self.batches == 0 {
            return bad("batches must be >= 1");
        }
        if self.batch_size == 0 {
            return bad("batch size must be >= 1");
        }
        if self.trials == 0 {
            return bad("trials must be >= 1");
        }
        if self.total_budget.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater)
            || self.per_iter_budget.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater)
        {
            return bad("time budgets must be positive");
        }
        Ok(())
    }

    pub fn evaluations(&self) -> usize {
        self.batches * self.batch_size
    }

    pub fn trial_seed(&self, problem: &str, trial: usize) -> u64 {
        SeedKey::new(self.seed)
            .str("trial")
            .str(problem)
            .int(trial as u64)
            .finish()
    }

    pub fn optimizer_seed(&self, problem: &str, optimizer: &str, trial: usize) -> u64 {
        SeedKey::new(self.seed)
            .str(problem)
            .str(optimizer)
            .int(trial as u64)
            .finish()
    }
}

/// Seconds since an arbitrary origin.
pub trait Clock: Send + Sync {
    fn now(&self) -> f64;
}

pub struct SystemClock(Instant);

impl SystemClock {
    pub fn new() -> Self {
        Self(Instant::now())
    }
}

impl Default for SystemClock {
    fn default() -> Self {
        Self::new()
    }
}

impl Clock for SystemClock {
    fn now(&self) -> f64 {
        self.0.elapsed().as_secs_f64()
    }
}

/// Manually advanced clock for deterministic budget tests.
#[derive(Clone, Default)]
pub struct VirtualClock(Arc<AtomicU64>);

impl VirtualClock {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn advance(&self, secs: f64) {
        let nanos = (secs * 1e9).round() as u64;
        self.0.fetch_add(nanos, Ordering::SeqCst);
    }
}

impl Clock for VirtualClock {
    fn now(&self) -> f64 {
        self.0.load(Ordering::SeqCst) as f64 / 1e9
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrashRecord {
    pub index: usize,
    pub message: String,
}

/// One JSON-lines record per batch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchRecord {
    pub batch: usize,
    /// Suggestions under real parameter names.
    pub suggestions: Vec<Suggestion>,
    pub outcomes: Vec<Outcome>,
    pub suggest_secs: f64,
    /// Cumulative suggest time at the end of this batch.
    pub elapsed_secs: f64,
    /// Batch minimum; `None` when every evaluation crashed or the batch was cut off.
    pub batch_min: Option<f64>,
    #[serde(default)]
    pub cutoff: bool,
    #[serde(default)]
    pub fallback: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub crashes: Vec<CrashRecord>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub events: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StudyLog {
    pub records: Vec<BatchRecord>,
}

impl StudyLog {
    /// `F[t]` with `+inf` for crashed or cut-off batches.
    pub fn batch_minima(&self) -> Vec<f64> {
        self.records
            .iter()
            .map(|r| r.batch_min.unwrap_or(f64::INFINITY))
            .collect()
    }

    pub fn cutoff_mask(&self) -> Vec<bool> {
        self.records.iter().map(|r| r.cutoff).collect()
    }

    pub fn evaluations(&self) -> impl Iterator<Item = (&Suggestion, Outcome)> {
        self.records
            .iter()
            .flat_map(|r| r.suggestions.iter().zip(r.outcomes.iter().copied()))
    }

    /// Best finite evaluation of the study.
    pub fn best(&self) -> Option<(&Suggestion, f64)> {
        let mut best: Option<(&Suggestion, f64)> = None;
        for (s, o) in self.evaluations() {
            if let Some(v) = o.loss() {
                if best.is_none_or(|(_, b)| v < b) {
                    best = Some((s, v));
                }
            }
        }
        best
    }
}

pub type OptimizerFactory<'a> =
    dyn Fn(&SearchSpace, u64) -> Result<Box<dyn Optimizer>, OptimizerError> + Sync + 'a;

#[derive(Debug, Clone, PartialEq)]
pub struct StudyOutcome {
    pub f: Vec<f64>,
    pub cutoff: Vec<bool>,
    pub log: StudyLog,
    pub warm_start: Option<WarmStartOutcome>,
}

fn panic_message(p: Box<dyn std::any::Any + Send>) -> String {
    p.downcast_ref::<&str>()
        .map(|s| s.to_string())
        .or_else(|| p.downcast_ref::<String>().cloned())
        .unwrap_or_else(|| "panic".into())
}

/// Whether the last suggest call tripped either time limit.
pub fn enforce_budget(cfg: &StudyConfig, call_secs: f64, cumulative_secs: f64) -> bool {
    call_secs > cfg.per_iter_budget || cumulative_secs > cfg.total_budget
}

struct Driver<'a> {
    opt: Box<dyn Optimizer>,
    map: Option<&'a AnonymizationMap>,
    real_space: &'a SearchSpace,
}

impl Driver<'_> {
    fn to_real(&self, s: &Suggestion) -> Suggestion {
        self.map.map_or_else(|| s.clone(), |m| m.to_original(s))
    }

    fn to_alias(&self, s: &Suggestion) -> Suggestion {
        self.map.map_or_else(|| s.clone(), |m| m.to_alias(s))
    }

    /// Suggestions in real names, or a reason to fall back.
    fn checked(&self, got: Vec<Suggestion>, k: usize) -> Result<Vec<Suggestion>, String> {
        if got.len() != k {
            return Err(format!(
                "optimizer returned {} suggestions, expected {k}",
                got.len()
            ));
        }
        got.iter()
            .map(|s| {
                let real = self.to_real(s);
                self.real_space
                    .coerce(&real)
                    .map_err(|e| format!("invalid suggestion: {e}"))
            })
            .collect()
    }
}

/// Runs one study. `prior` is offered to the optimizer before batch 1.
pub fn run_study(
    problem: &Problem,
    optimizer_id: &str,
    factory: &OptimizerFactory<'_>,
    cfg: &StudyConfig,
    trial: usize,
    clock: &dyn Clock,
    prior: Option<&ObservationArchive>,
) -> Result<StudyOutcome, HarnessError> {
    cfg.validate()?;
    let real_space = problem.space();
    let anon = cfg.anonymize.then(|| real_space.anonymize());
    let opt_space = anon.as_ref().map_or(real_space, |(s, _)| s);
    let opt_seed = cfg.optimizer_seed(problem.id(), optimizer_id, trial);
    let trial_seed = cfg.trial_seed(problem.id(), trial);
    let mut driver = Driver {
        opt: factory(opt_space, opt_seed)?,
        map: anon.as_ref().map(|(_, m)| m),
        real_space,
    };
    let warm_start = prior.map(|p| driver.opt.ingest_warm_start(p));

    let k = cfg.batch_size;
    let mut fallback: Option<RandomSearch> = None;
    let mut cut = false;
    let mut elapsed = 0.0;
    let mut log = StudyLog::default();
    let mut f = Vec::with_capacity(cfg.batches);
    let mut mask = Vec::with_capacity(cfg.batches);
    let start_fallback = |events: &mut Vec<String>, why: String| {
        events.push(format!("fallback to random search: {why}"));
        log::warn!(
            "{} / {optimizer_id} trial {trial}: {why}; using random search",
            problem.id()
        );
        RandomSearch::new(
            real_space.clone(),
            SeedKey::new(opt_seed).str("fallback").finish(),
        )
    };

    for t in 0..cfg.batches {
        let mut rec = BatchRecord {
            batch: t + 1,
            suggestions: Vec::new(),
            outcomes: Vec::new(),
            suggest_secs: 0.0,
            elapsed_secs: elapsed,
            batch_min: None,
            cutoff: false,
            fallback: fallback.is_some(),
            crashes: Vec::new(),
            events: Vec::new(),
        };
        if t == 0 {
            match &warm_start {
                Some(WarmStartOutcome::Ignored) => rec.events.push("warm start: ignored".into()),
                Some(WarmStartOutcome::Accepted { queued, archived }) => rec
                    .events
                    .push(format!("warm start: {queued} queued, {archived} archived")),
                None => {}
            }
        }
        if cut {
            rec.cutoff = true;
            f.push(f64::INFINITY);
            mask.push(true);
            log.records.push(rec);
            continue;
        }

        let suggestions = if let Some(rs) = fallback.as_mut() {
            rs.suggest(k)?
        } else {
            let t0 = clock.now();
            let res = catch_unwind(AssertUnwindSafe(|| driver.opt.suggest(k)));
            let dt = (clock.now() - t0).max(0.0);
            elapsed += dt;
            rec.suggest_secs = dt;
            rec.elapsed_secs = elapsed;
            if enforce_budget(cfg, dt, elapsed) {
                cut = true;
                rec.cutoff = true;
                rec.events.push(format!(
                    "cut off: suggest took {dt:.3}s (limit {}s), cumulative {elapsed:.3}s (limit {}s)",
                    cfg.per_iter_budget, cfg.total_budget
                ));
                f.push(f64::INFINITY);
                mask.push(true);
                log.records.push(rec);
                continue;
            }
            let outcome = match res {
                Ok(Ok(v)) => driver.checked(v, k),
                Ok(Err(e)) => Err(format!("suggest failed: {e}")),
                Err(p) => Err(format!("suggest panicked: {}", panic_message(p))),
            };
            match outcome {
                Ok(v) => v,
                Err(why) => {
                    rec.fallback = true;
                    fallback
                        .insert(start_fallback(&mut rec.events, why))
                        .suggest(k)?
                }
            }
        };

        let mut outcomes = Vec::with_capacity(k);
        for (i, s) in suggestions.iter().enumerate() {
            let o = match problem.evaluate(s, trial_seed) {
                Ok(v) => Outcome::Loss(v),
                Err(EvalError::Crash(msg)) => {
                    rec.crashes.push(CrashRecord {
                        index: i,
                        message: msg,
                    });
                    Outcome::Crash
                }
                Err(EvalError::Invalid(e)) => {
                    rec.crashes.push(CrashRecord {
                        index: i,
                        message: format!("invalid: {e}"),
                    });
                    Outcome::Crash
                }
            };
            outcomes.push(o);
        }
        let bmin = outcomes
            .iter()
            .map(|o| o.or_inf())
            .fold(f64::INFINITY, f64::min);
        rec.batch_min = bmin.is_finite().then_some(bmin);
        f.push(bmin);
        mask.push(false);

        if fallback.is_none() {
            let obs: Vec<Observation> = suggestions
                .iter()
                .zip(&outcomes)
                .map(|(s, o)| Observation::new(driver.to_alias(s), *o))
                .collect();
            let res = catch_unwind(AssertUnwindSafe(|| driver.opt.observe(&obs)));
            let why = match res {
                Ok(Ok(())) => None,
                Ok(Err(e)) => Some(format!("observe failed: {e}")),
                Err(p) => Some(format!("observe panicked: {}", panic_message(p))),
            };
            if let Some(why) = why {
                rec.fallback = true;
                fallback = Some(start_fallback(&mut rec.events, why));
            }
        }
        rec.suggestions = suggestions;
        rec.outcomes = outcomes;
        log.records.push(rec);
    }
    Ok(StudyOutcome {
        f,
        cutoff: mask,
        log,
        warm_start,
    })
}

/// `F[p][t][n]` plus the cut-off mask, stored flat in `(p, t, n)` order.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalTensor {
    pub problems: Vec<String>,
    pub batches: usize,
    pub trials: usize,
    f: Vec<f64>,
    cutoff: Vec<bool>,
}

impl EvalTensor {
    pub fn new(problems: Vec<String>, batches: usize, trials: usize) -> Self {
        let len = problems.len() * batches * trials;
        Self {
            problems,
            batches,
            trials,
            f: vec![f64::INFINITY; len],
            cutoff: vec![false; len],
        }
    }

    /// Builds from nested `[p][t][n]` values.
    pub fn from_nested(problems: Vec<String>, f: &[Vec<Vec<f64>>]) -> Result<Self, HarnessError> {
        let batches = f.first().map_or(0, Vec::len);
        let trials = f.first().and_then(|p| p.first()).map_or(0, Vec::len);
        if f.len() != problems.len()
            || f.iter()
                .any(|p| p.len() != batches || p.iter().any(|t| t.len() != trials))
        {
            return Err(HarnessError::Config("ragged evaluation tensor".into()));
        }
        let mut out = Self::new(problems, batches, trials);
        for (p, pv) in f.iter().enumerate() {
            for (t, tv) in pv.iter().enumerate() {
                for (n, &v) in tv.iter().enumerate() {
                    out.set(p, t, n, v, false);
                }
            }
        }
        Ok(out)
    }

    fn idx(&self, p: usize, t: usize, n: usize) -> usize {
        (p * self.batches + t) * self.trials + n
    }

    pub fn get(&self, p: usize, t: usize, n: usize) -> f64 {
        self.f[self.idx(p, t, n)]
    }

    pub fn is_cutoff(&self, p: usize, t: usize, n: usize) -> bool {
        self.cutoff[self.idx(p, t, n)]
    }

    pub fn set(&mut self, p: usize, t: usize, n: usize, v: f64, cutoff: bool) {
        let i = self.idx(p, t, n);
        self.f[i] = if cutoff { f64::INFINITY } else { v };
        self.cutoff[i] = cutoff;
    }

    pub fn set_study(&mut self, p: usize, n: usize, f: &[f64], cutoff: &[bool]) {
        for t in 0..self.batches {
            self.set(p, t, n, f[t], cutoff[t]);
        }
    }

    /// The series `F[p][.][n]`.
    pub fn series(&self, p: usize, n: usize) -> Vec<f64> {
        (0..self.batches).map(|t| self.get(p, t, n)).collect()
    }

    /// Applies `g` to every finite entry (used for rescaling checks).
    pub fn map_problem(&mut self, p: usize, g: impl Fn(f64) -> f64) {
        for t in 0..self.batches {
            for n in 0..self.trials {
                let i = self.idx(p, t, n);
                if self.f[i].is_finite() {
                    self.f[i] = g(self.f[i]);
                }
            }
        }
    }
}
