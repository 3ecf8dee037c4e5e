use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{median, ScoringError};
use crate::optimizers::random::sample_uniform;
use crate::optimizers::rng_from;
use crate::problems::Problem;
use crate::seed::SeedKey;

pub const DEFAULT_RS_SAMPLES: usize = 10_000;
pub const MIN_RS_SAMPLES: usize = 1_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemCalibration {
    pub problem: String,
    /// Median loss of one random-search evaluation.
    pub clip: f64,
    /// Best known loss.
    pub opt: f64,
    /// True when `opt` is the analytic optimum.
    pub known_opt: bool,
    /// Smallest loss among the calibration samples.
    pub sample_min: f64,
    pub n_samples: usize,
    pub crash_rate: f64,
    pub seed: u64,
}

impl ProblemCalibration {
    /// Lowers `opt` to an observed loss unless the optimum is analytic.
    pub fn with_observed_min(mut self, observed: f64) -> Self {
        if !self.known_opt && observed < self.opt {
            self.opt = observed;
        }
        self
    }

    /// Sets `opt` to the best loss observed in an experiment unless the
    /// optimum is analytic. Calibration's own minimum is kept when nothing
    /// finite was observed.
    pub fn with_experiment_min(mut self, observed: f64) -> Self {
        if !self.known_opt && observed.is_finite() {
            self.opt = observed;
        }
        self
    }
}

/// Median of `n` independent random-search evaluations, each on its own
/// seeded split. Crashes are excluded from the median and reported as a rate.
pub fn calibrate(
    problem: &Problem,
    seed: u64,
    n: usize,
) -> Result<ProblemCalibration, ScoringError> {
    let err = |reason: String| ScoringError::Calibration {
        problem: problem.id().to_string(),
        reason,
    };
    if n < MIN_RS_SAMPLES {
        return Err(err(format!(
            "{n} random-search samples requested, at least {MIN_RS_SAMPLES} required"
        )));
    }
    let losses: Vec<Option<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let key = SeedKey::new(seed)
                .str("calibrate")
                .str(problem.id())
                .int(i as u64);
            let mut rng = rng_from(key.clone().str("point").finish());
            let s = sample_uniform(problem.space(), &mut rng);
            problem.evaluate(&s, key.str("split").finish()).ok()
        })
        .collect();
    let ok: Vec<f64> = losses.iter().flatten().copied().collect();
    if ok.is_empty() {
        return Err(err("every calibration sample crashed".into()));
    }
    let crash_rate = 1.0 - ok.len() as f64 / n as f64;
    if crash_rate > 0.0 {
        log::info!(
            "{}: {:.1}% of calibration samples crashed",
            problem.id(),
            100.0 * crash_rate
        );
    }
    let clip = median(&ok);
    let sample_min = ok.iter().copied().fold(f64::INFINITY, f64::min);
    let (opt, known_opt) = match problem.known_opt() {
        Some(v) => (v, true),
        None => (sample_min, false),
    };
    Ok(ProblemCalibration {
        problem: problem.id().to_string(),
        clip,
        opt,
        known_opt,
        sample_min,
        n_samples: n,
        crash_rate,
        seed,
    })
}

/// Calibrations persisted as one JSON file per (problem, seed, sample count).
#[derive(Debug, Clone)]
pub struct CalibrationCache {
    dir: PathBuf,
}

impl CalibrationCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path(&self, problem: &str, seed: u64, n: usize) -> PathBuf {
        let safe: String = problem
            .chars()
            .map(|c| {
                if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                    c
                } else {
                    '_'
                }
            })
            .collect();
        self.dir.join(format!("{safe}-s{seed}-n{n}.json"))
    }

    pub fn load(&self, problem: &str, seed: u64, n: usize) -> Option<ProblemCalibration> {
        let text = std::fs::read_to_string(self.path(problem, seed, n)).ok()?;
        let cal: ProblemCalibration = serde_json::from_str(&text).ok()?;
        (cal.problem == problem && cal.seed == seed && cal.n_samples == n).then_some(cal)
    }

    pub fn store(&self, cal: &ProblemCalibration) -> Result<(), ScoringError> {
        let path = self.path(&cal.problem, cal.seed, cal.n_samples);
        let io = |source| ScoringError::Io {
            path: path.display().to_string(),
            source,
        };
        std::fs::create_dir_all(&self.dir).map_err(io)?;
        let text = serde_json::to_string_pretty(cal).expect("calibration serializes");
        std::fs::write(&path, text + "\n").map_err(io)
    }
}

pub fn load_or_calibrate(
    problem: &Problem,
    seed: u64,
    n: usize,
    cache: Option<&CalibrationCache>,
) -> Result<ProblemCalibration, ScoringError> {
    if let Some(c) = cache.and_then(|c| c.load(problem.id(), seed, n)) {
        return Ok(c);
    }
    let cal = calibrate(problem, seed, n)?;
    if let Some(c) = cache {
        c.store(&cal)?;
    }
    Ok(cal)
}
