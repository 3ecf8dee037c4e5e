//! Post-hoc statistics: bootstrap confidence, ranking stability and
//! random-search equivalence.

mod bootstrap;
mod rs_curve;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::harness::EvalTensor;
use crate::scoring::{clipped_scores, score_team, ProblemCalibration, ScoringError};

pub use bootstrap::{
    bootstrap_change, bootstrap_scores, percentile, rank_confidence, BootstrapConfig,
    BootstrapScores, RankingDistribution, RankingFrequency, ScoreChange, TeamFinals,
    CONFIDENCE_MASS, MIN_REPLICATIONS,
};
pub use rs_curve::{
    expected_min, expected_min_curve, pooled_rs_curve, rs_equivalence, sample_rs_pool, RsCurve,
    RsEquivalence, TrialPools,
};

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("analysis config error: {0}")]
    Config(String),
    #[error("curve holds at most m = {max} evaluations, {requested} requested")]
    Extrapolation { requested: usize, max: usize },
    #[error(transparent)]
    Scoring(#[from] ScoringError),
}

/// `S'[p][n]` at the final batch.
pub fn final_clipped(
    tensor: &EvalTensor,
    cals: &[ProblemCalibration],
) -> Result<Vec<Vec<f64>>, ScoringError> {
    let sp = clipped_scores(tensor, cals)?;
    Ok(sp
        .into_iter()
        .map(|mut p| p.pop().unwrap_or_default())
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreInterval {
    pub team: String,
    pub score: f64,
    pub p2_5: f64,
    pub p50: f64,
    pub p97_5: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RsRow {
    pub team: String,
    pub score: f64,
    pub equivalence: RsEquivalence,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub replications: usize,
    pub seed: u64,
    pub trials: usize,
    pub intervals: Vec<ScoreInterval>,
    pub rankings: Vec<RankingFrequency>,
    pub rank_histograms: Vec<(String, Vec<f64>)>,
    pub confidence_set: Vec<RankingFrequency>,
    pub confidence_mass: f64,
    pub table: String,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub rs_equivalence: Vec<RsRow>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub warnings: Vec<String>,
}

pub const TABLE_COLUMNS: usize = 3;
pub const REPORTED_RANKINGS: usize = 20;

/// Full confidence report for a set of teams scored on the same problems.
/// `budget` is the evaluations per study used for RS efficiency.
pub fn analyze(
    teams: &[(String, &EvalTensor)],
    cals: &[ProblemCalibration],
    cfg: &BootstrapConfig,
    curve: Option<&RsCurve>,
    budget: usize,
) -> Result<AnalysisReport, AnalysisError> {
    cfg.validate()?;
    let mut finals = Vec::with_capacity(teams.len());
    let mut point = Vec::with_capacity(teams.len());
    for (team, tensor) in teams {
        finals.push(TeamFinals {
            team: team.clone(),
            finals: final_clipped(tensor, cals)?,
        });
        point.push(score_team(team, tensor, cals)?);
    }
    let trials = teams.first().map_or(0, |(_, t)| t.trials);
    let mut warnings = Vec::new();
    if trials == 1 {
        warnings.push(
            "only one trial per problem: bootstrap distributions are point masses".to_string(),
        );
        log::warn!("{}", warnings[0]);
    }
    let bs = bootstrap_scores(&finals, cals, cfg)?;
    let rd = rank_confidence(&bs);
    let intervals = point
        .iter()
        .zip(&bs.scores)
        .map(|(r, s)| ScoreInterval {
            team: r.team.clone(),
            score: r.score,
            p2_5: percentile(s, 2.5),
            p50: percentile(s, 50.0),
            p97_5: percentile(s, 97.5),
        })
        .collect();
    let rs = match curve {
        Some(c) => point
            .iter()
            .map(|r| RsRow {
                team: r.team.clone(),
                score: r.score,
                equivalence: rs_equivalence(r.score, c, budget),
            })
            .collect(),
        None => Vec::new(),
    };
    Ok(AnalysisReport {
        replications: cfg.replications,
        seed: cfg.seed,
        trials,
        intervals,
        rankings: rd
            .rankings
            .iter()
            .take(REPORTED_RANKINGS)
            .cloned()
            .collect(),
        rank_histograms: rd
            .teams
            .iter()
            .cloned()
            .zip(rd.histograms.iter().cloned())
            .collect(),
        confidence_set: rd.confidence_set.clone(),
        confidence_mass: rd.confidence_mass,
        table: rd.table(TABLE_COLUMNS),
        rs_equivalence: rs,
        warnings,
    })
}
