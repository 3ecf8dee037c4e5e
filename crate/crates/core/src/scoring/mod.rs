//! Leaderboard scoring: cumulative minimum, clipping at the random-search
//! median, per-problem normalization and the 0-100 grand mean.

mod calibration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::harness::EvalTensor;

pub use calibration::{
    calibrate, load_or_calibrate, CalibrationCache, ProblemCalibration, DEFAULT_RS_SAMPLES,
    MIN_RS_SAMPLES,
};

#[derive(Debug, Error)]
pub enum ScoringError {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("calibration error on {problem}: {reason}")]
    Calibration { problem: String, reason: String },
    #[error("no scorable problems (all {0} degenerate)")]
    AllDegenerate(usize),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Neumaier-compensated sum.
pub fn compensated_sum(xs: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0f64;
    let mut c = 0.0f64;
    for x in xs {
        let t = sum + x;
        if sum.abs() >= x.abs() {
            c += (sum - t) + x;
        } else {
            c += (x - t) + sum;
        }
        sum = t;
    }
    sum + c
}

pub fn compensated_mean(xs: &[f64]) -> f64 {
    compensated_sum(xs.iter().copied()) / xs.len() as f64
}

pub fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

pub fn cumulative_min(f: &[f64]) -> Result<Vec<f64>, ScoringError> {
    if f.is_empty() {
        return Err(ScoringError::Shape("empty batch series".into()));
    }
    let mut best = f64::INFINITY;
    Ok(f.iter()
        .map(|&v| {
            if v < best {
                best = v;
            }
            best
        })
        .collect())
}

pub fn clip(s: &[f64], clip_p: f64) -> Vec<f64> {
    s.iter()
        .map(|&v| if v < clip_p { v } else { clip_p })
        .collect()
}

/// `S'[p][t][n]` from a tensor and aligned calibrations.
pub fn clipped_scores(
    tensor: &EvalTensor,
    cals: &[ProblemCalibration],
) -> Result<Vec<Vec<Vec<f64>>>, ScoringError> {
    check_alignment(tensor, cals)?;
    let (tt, nn) = (tensor.batches, tensor.trials);
    let mut out = vec![vec![vec![0.0; nn]; tt]; tensor.problems.len()];
    for (p, cal) in cals.iter().enumerate() {
        for n in 0..nn {
            let s = clip(&cumulative_min(&tensor.series(p, n))?, cal.clip);
            for (row, v) in out[p].iter_mut().zip(s) {
                row[n] = v;
            }
        }
    }
    Ok(out)
}

fn check_alignment(tensor: &EvalTensor, cals: &[ProblemCalibration]) -> Result<(), ScoringError> {
    if tensor.problems.len() != cals.len() {
        return Err(ScoringError::Shape(format!(
            "{} problems but {} calibrations",
            tensor.problems.len(),
            cals.len()
        )));
    }
    for (id, c) in tensor.problems.iter().zip(cals) {
        if *id != c.problem {
            return Err(ScoringError::Shape(format!(
                "calibration for `{}` aligned with `{id}`",
                c.problem
            )));
        }
    }
    Ok(())
}

/// Normalized loss: 0 at the optimum, 1 at the clip level.
pub fn normalize(v: f64, cal: &ProblemCalibration) -> f64 {
    (v - cal.opt) / (cal.clip - cal.opt)
}

pub fn is_degenerate(cal: &ProblemCalibration) -> bool {
    cal.clip.partial_cmp(&cal.opt) != Some(std::cmp::Ordering::Greater)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TrialAggregate {
    Mean,
    Median,
}

/// Per-problem normalized performance at batch `t` (0-based), `None` for
/// degenerate problems.
pub fn problem_norms(
    s_prime: &[Vec<Vec<f64>>],
    cals: &[ProblemCalibration],
    t: usize,
    how: TrialAggregate,
) -> Vec<Option<f64>> {
    s_prime
        .iter()
        .zip(cals)
        .map(|(sp, cal)| {
            if is_degenerate(cal) {
                return None;
            }
            let norm: Vec<f64> = sp[t].iter().map(|&v| normalize(v, cal)).collect();
            Some(match how {
                TrialAggregate::Mean => compensated_mean(&norm),
                TrialAggregate::Median => median(&norm),
            })
        })
        .collect()
}

fn grand_score(norms: &[Option<f64>]) -> Result<f64, ScoringError> {
    let kept: Vec<f64> = norms.iter().flatten().copied().collect();
    if kept.is_empty() {
        return Err(ScoringError::AllDegenerate(norms.len()));
    }
    Ok(100.0 * (1.0 - compensated_mean(&kept)))
}

fn warn_degenerate(cals: &[ProblemCalibration]) {
    for c in cals.iter().filter(|c| is_degenerate(c)) {
        log::warn!(
            "problem {} dropped from scoring: clip {} equals optimum {}",
            c.problem,
            c.clip,
            c.opt
        );
    }
}

/// Leaderboard score at the final batch.
pub fn normalize_and_aggregate(
    s_prime: &[Vec<Vec<f64>>],
    cals: &[ProblemCalibration],
) -> Result<f64, ScoringError> {
    let t = last_batch(s_prime)?;
    warn_degenerate(cals);
    grand_score(&problem_norms(s_prime, cals, t, TrialAggregate::Mean))
}

pub fn median_score(
    s_prime: &[Vec<Vec<f64>>],
    cals: &[ProblemCalibration],
) -> Result<f64, ScoringError> {
    let t = last_batch(s_prime)?;
    grand_score(&problem_norms(s_prime, cals, t, TrialAggregate::Median))
}

fn last_batch(s_prime: &[Vec<Vec<f64>>]) -> Result<usize, ScoringError> {
    let t = s_prime.first().map_or(0, Vec::len);
    if t == 0 {
        return Err(ScoringError::Shape("no batches".into()));
    }
    Ok(t - 1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemScore {
    pub problem: String,
    /// Mean-over-trials normalized final performance; `None` if dropped.
    pub norm: Option<f64>,
    pub norm_median: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub team: String,
    pub score: f64,
    pub median: f64,
    /// Score after each batch.
    pub curve: Vec<f64>,
    pub per_problem: Vec<ProblemScore>,
    pub dropped: Vec<String>,
}

pub fn score_team(
    team: &str,
    tensor: &EvalTensor,
    cals: &[ProblemCalibration],
) -> Result<ScoreReport, ScoringError> {
    let sp = clipped_scores(tensor, cals)?;
    let t = last_batch(&sp)?;
    let means = problem_norms(&sp, cals, t, TrialAggregate::Mean);
    let medians = problem_norms(&sp, cals, t, TrialAggregate::Median);
    let curve = (0..=t)
        .map(|b| grand_score(&problem_norms(&sp, cals, b, TrialAggregate::Mean)))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ScoreReport {
        team: team.to_string(),
        score: grand_score(&means)?,
        median: grand_score(&medians)?,
        curve,
        per_problem: cals
            .iter()
            .zip(means.iter().zip(&medians))
            .map(|(c, (m, md))| ProblemScore {
                problem: c.problem.clone(),
                norm: *m,
                norm_median: *md,
            })
            .collect(),
        dropped: cals
            .iter()
            .filter(|c| is_degenerate(c))
            .map(|c| c.problem.clone())
            .collect(),
    })
}

/// CSV with columns `optimizer,score,median,<problem>...` (per-problem
/// normalized final performance).
pub fn scores_csv(reports: &[ScoreReport]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["optimizer".to_string(), "score".into(), "median".into()];
    if let Some(r) = reports.first() {
        header.extend(r.per_problem.iter().map(|p| p.problem.clone()));
    }
    w.write_record(&header).expect("in-memory write");
    for r in reports {
        let mut row = vec![
            r.team.clone(),
            format!("{:.6}", r.score),
            format!("{:.6}", r.median),
        ];
        row.extend(
            r.per_problem
                .iter()
                .map(|p| p.norm.map(|v| format!("{v:.6}")).unwrap_or_default()),
        );
        w.write_record(&row).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
}
