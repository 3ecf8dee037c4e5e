//! Bootstrap over trials and the resulting ranking distribution.

use std::collections::HashMap;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::AnalysisError;
use crate::optimizers::rng_from;
use crate::scoring::{compensated_mean, is_degenerate, normalize, ProblemCalibration};
use crate::seed::SeedKey;

pub const MIN_REPLICATIONS: usize = 100;
pub const CONFIDENCE_MASS: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapConfig {
    pub replications: usize,
    pub seed: u64,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        Self {
            replications: 10_000,
            seed: 0,
        }
    }
}

impl BootstrapConfig {
    pub fn validate(&self) -> Result<(), AnalysisError> {
        if self.replications < MIN_REPLICATIONS {
            return Err(AnalysisError::Config(format!(
                "bootstrap needs at least {MIN_REPLICATIONS} replications, got {}",
                self.replications
            )));
        }
        Ok(())
    }
}

/// Final clipped best-so-far `S'[p][n]` of one team.
#[derive(Debug, Clone, PartialEq)]
pub struct TeamFinals {
    pub team: String,
    pub finals: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BootstrapScores {
    pub teams: Vec<String>,
    /// `[team][replication]`
    pub scores: Vec<Vec<f64>>,
}

/// Each replication resamples, per problem, `N` final values with
/// replacement and recomputes the leaderboard score. Every team draws from
/// its own stream keyed by (seed, replication, team index).
pub fn bootstrap_scores(
    teams: &[TeamFinals],
    cals: &[ProblemCalibration],
    cfg: &BootstrapConfig,
) -> Result<BootstrapScores, AnalysisError> {
    cfg.validate()?;
    let Some(first) = teams.first() else {
        return Err(AnalysisError::Config("no teams to bootstrap".into()));
    };
    let n_trials = first.finals.first().map_or(0, Vec::len);
    for t in teams {
        if t.finals.len() != cals.len() {
            return Err(AnalysisError::Config(format!(
                "team {} has {} problems, expected {}",
                t.team,
                t.finals.len(),
                cals.len()
            )));
        }
        if t.finals.iter().any(|p| p.len() != n_trials) || n_trials == 0 {
            return Err(AnalysisError::Config(format!(
                "team {} has mismatched trial counts",
                t.team
            )));
        }
    }
    let kept: Vec<usize> = (0..cals.len())
        .filter(|&p| !is_degenerate(&cals[p]))
        .collect();
    if kept.is_empty() {
        return Err(AnalysisError::Config("every problem is degenerate".into()));
    }
    let norms: Vec<Vec<Vec<f64>>> = teams
        .iter()
        .map(|t| {
            kept.iter()
                .map(|&p| {
                    t.finals[p]
                        .iter()
                        .map(|&v| normalize(v, &cals[p]))
                        .collect()
                })
                .collect()
        })
        .collect();

    let scores = norms
        .par_iter()
        .enumerate()
        .map(|(ti, team)| {
            (0..cfg.replications)
                .map(|r| {
                    let mut rng = rng_from(
                        SeedKey::new(cfg.seed)
                            .str("bootstrap")
                            .int(r as u64)
                            .int(ti as u64)
                            .finish(),
                    );
                    let per_problem: Vec<f64> = team
                        .iter()
                        .map(|vals| {
                            let draws: Vec<f64> = (0..n_trials)
                                .map(|_| vals[rng.gen_range(0..n_trials)])
                                .collect();
                            compensated_mean(&draws)
                        })
                        .collect();
                    100.0 * (1.0 - compensated_mean(&per_problem))
                })
                .collect()
        })
        .collect();
    Ok(BootstrapScores {
        teams: teams.iter().map(|t| t.team.clone()).collect(),
        scores,
    })
}

/// Bootstrap interval of `after - before` for one team scored twice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreChange {
    pub team: String,
    pub delta: f64,
    pub p2_5: f64,
    pub p97_5: f64,
}

impl ScoreChange {
    pub fn contains_zero(&self) -> bool {
        self.p2_5 <= 0.0 && 0.0 <= self.p97_5
    }
}

/// `delta` is the point difference; the interval resamples both runs
/// independently.
pub fn bootstrap_change(
    before: &TeamFinals,
    after: &TeamFinals,
    cals: &[ProblemCalibration],
    cfg: &BootstrapConfig,
) -> Result<ScoreChange, AnalysisError> {
    let bs = bootstrap_scores(&[before.clone(), after.clone()], cals, cfg)?;
    let diffs: Vec<f64> = bs.scores[1]
        .iter()
        .zip(&bs.scores[0])
        .map(|(a, b)| a - b)
        .collect();
    let point = |t: &TeamFinals| -> f64 {
        let kept: Vec<f64> = (0..cals.len())
            .filter(|&p| !is_degenerate(&cals[p]))
            .map(|p| {
                compensated_mean(
                    &t.finals[p]
                        .iter()
                        .map(|&v| normalize(v, &cals[p]))
                        .collect::<Vec<_>>(),
                )
            })
            .collect();
        100.0 * (1.0 - compensated_mean(&kept))
    };
    Ok(ScoreChange {
        team: after.team.clone(),
        delta: point(after) - point(before),
        p2_5: percentile(&diffs, 2.5),
        p97_5: percentile(&diffs, 97.5),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingFrequency {
    pub ranking: Vec<String>,
    pub frequency: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingDistribution {
    pub teams: Vec<String>,
    /// Full rankings, most frequent first.
    pub rankings: Vec<RankingFrequency>,
    /// `histograms[team][rank]`: share of replications placing the team at that rank.
    pub histograms: Vec<Vec<f64>>,
    /// Smallest set of top rankings with cumulative frequency at least 0.9.
    pub confidence_set: Vec<RankingFrequency>,
    pub confidence_mass: f64,
}

/// Ranks teams in every replication (descending score, ties by team id).
pub fn rank_confidence(bs: &BootstrapScores) -> RankingDistribution {
    let k = bs.teams.len();
    let reps = bs.scores.first().map_or(0, Vec::len);
    let mut tally: HashMap<Vec<usize>, usize> = HashMap::new();
    let mut hist = vec![vec![0usize; k]; k];
    for r in 0..reps {
        let mut order: Vec<usize> = (0..k).collect();
        order.sort_by(|&a, &b| {
            bs.scores[b][r]
                .total_cmp(&bs.scores[a][r])
                .then_with(|| bs.teams[a].cmp(&bs.teams[b]))
        });
        for (rank, &t) in order.iter().enumerate() {
            hist[t][rank] += 1;
        }
        *tally.entry(order).or_default() += 1;
    }
    let mut entries: Vec<(Vec<usize>, usize)> = tally.into_iter().collect();
    entries.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    let denom = reps.max(1) as f64;
    let rankings: Vec<RankingFrequency> = entries
        .iter()
        .map(|(order, c)| RankingFrequency {
            ranking: order.iter().map(|&i| bs.teams[i].clone()).collect(),
            frequency: *c as f64 / denom,
        })
        .collect();
    let mut cum = 0usize;
    let mut confidence_set = Vec::new();
    for (rf, (_, c)) in rankings.iter().zip(&entries) {
        confidence_set.push(rf.clone());
        cum += c;
        if cum as f64 >= CONFIDENCE_MASS * denom {
            break;
        }
    }
    RankingDistribution {
        teams: bs.teams.clone(),
        rankings,
        histograms: hist
            .into_iter()
            .map(|row| row.into_iter().map(|c| c as f64 / denom).collect())
            .collect(),
        confidence_set,
        confidence_mass: cum as f64 / denom,
    }
}

impl RankingDistribution {
    /// Text table: one column per top ranking, one row per rank position,
    /// and a final frequency row.
    pub fn table(&self, columns: usize) -> String {
        let cols: Vec<&RankingFrequency> = self.rankings.iter().take(columns.max(1)).collect();
        let width = self.teams.iter().map(String::len).max().unwrap_or(4).max(9);
        let mut out = format!("{:<6}", "Rank");
        for (i, _) in cols.iter().enumerate() {
            out.push_str(&format!(" | {:<width$}", format!("Ranking {}", i + 1)));
        }
        out.push('\n');
        for pos in 0..self.teams.len() {
            out.push_str(&format!("{:<6}", pos + 1));
            for c in &cols {
                out.push_str(&format!(" | {:<width$}", c.ranking[pos]));
            }
            out.push('\n');
        }
        out.push_str(&format!("{:<6}", "Freq"));
        for c in &cols {
            out.push_str(&format!(
                " | {:<width$}",
                format!("{:.1}%", 100.0 * c.frequency)
            ));
        }
        out.push('\n');
        out
    }
}

/// Linear-interpolated percentile (`q` in `[0, 100]`).
pub fn percentile(xs: &[f64], q: f64) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    if v.len() == 1 {
        return v[0];
    }
    let pos = q / 100.0 * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (pos - lo as f64) * (v[hi] - v[lo])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cal(p: &str) -> ProblemCalibration {
        ProblemCalibration {
            problem: p.into(),
            clip: 1.0,
            opt: 0.0,
            known_opt: true,
            sample_min: 0.0,
            n_samples: 1000,
            crash_rate: 0.0,
            seed: 0,
        }
    }

    #[test]
    fn single_trial_is_a_point_mass() {
        let teams = vec![TeamFinals {
            team: "a".into(),
            finals: vec![vec![0.3], vec![0.5]],
        }];
        let bs =
            bootstrap_scores(&teams, &[cal("p"), cal("q")], &BootstrapConfig::default()).unwrap();
        assert!(bs.scores[0].iter().all(|&s| (s - 60.0).abs() < 1e-12));
    }

    #[test]
    fn replications_below_minimum_are_rejected() {
        let cfg = BootstrapConfig {
            replications: 99,
            seed: 0,
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn ties_break_by_team_id() {
        let bs = BootstrapScores {
            teams: vec!["b".into(), "a".into()],
            scores: vec![vec![50.0; 100], vec![50.0; 100]],
        };
        let rd = rank_confidence(&bs);
        assert_eq!(rd.rankings.len(), 1);
        assert_eq!(rd.rankings[0].ranking, vec!["a".to_string(), "b".into()]);
    }

    #[test]
    fn table_layout() {
        let bs = BootstrapScores {
            teams: vec!["a".into(), "b".into()],
            scores: vec![(0..100).map(|i| i as f64).collect(), vec![9.5; 100]],
        };
        let t = rank_confidence(&bs).table(3);
        let lines: Vec<&str> = t.lines().collect();
        assert_eq!(lines.len(), 4);
        assert!(lines[0].contains("Ranking 2"));
        assert!(
            lines[3].starts_with("Freq")
                && lines[3].contains("90.0%")
                && lines[3].contains("10.0%")
        );
    }

    #[test]
    fn identical_runs_change_by_zero() {
        let t = TeamFinals {
            team: "a".into(),
            finals: vec![vec![0.1, 0.5, 0.9, 0.3], vec![0.2, 0.4, 0.6, 0.8]],
        };
        let ch =
            bootstrap_change(&t, &t, &[cal("p"), cal("q")], &BootstrapConfig::default()).unwrap();
        assert_eq!(ch.delta, 0.0);
        assert!(ch.contains_zero() && ch.p2_5 < 0.0);
        let better = TeamFinals {
            team: "a".into(),
            finals: vec![vec![0.0; 4], vec![0.0; 4]],
        };
        let ch = bootstrap_change(
            &t,
            &better,
            &[cal("p"), cal("q")],
            &BootstrapConfig::default(),
        )
        .unwrap();
        assert!(ch.delta > 40.0 && !ch.contains_zero());
    }

    #[test]
    fn percentiles_interpolate() {
        let xs: Vec<f64> = (0..=100).map(f64::from).collect();
        assert_eq!(percentile(&xs, 2.5), 2.5);
        assert_eq!(percentile(&xs, 50.0), 50.0);
        assert_eq!(percentile(&[4.0], 97.5), 4.0);
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(32))]

        #[test]
        fn ranking_frequencies_form_distributions(
            finals in proptest::collection::vec(proptest::collection::vec(0.0..1.0f64, 3), 2..5),
            seed in proptest::prelude::any::<u64>(),
        ) {
            let teams: Vec<TeamFinals> = finals
                .iter()
                .enumerate()
                .map(|(i, f)| TeamFinals { team: format!("t{i}"), finals: vec![f.clone(), f.iter().map(|v| 1.0 - v).collect()] })
                .collect();
            let cfg = BootstrapConfig { replications: 200, seed };
            let bs = bootstrap_scores(&teams, &[cal("p"), cal("q")], &cfg).unwrap();
            proptest::prop_assert!(bs.scores.iter().flatten().all(|s| (0.0..=100.0).contains(s)));
            let rd = rank_confidence(&bs);
            let total: f64 = rd.rankings.iter().map(|r| r.frequency).sum();
            proptest::prop_assert!((total - 1.0).abs() < 1e-12);
            for row in &rd.histograms {
                proptest::prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
            for pos in 0..teams.len() {
                let col: f64 = rd.histograms.iter().map(|r| r[pos]).sum();
                proptest::prop_assert!((col - 1.0).abs() < 1e-12);
            }
            proptest::prop_assert!(rd.confidence_mass >= CONFIDENCE_MASS);
            proptest::prop_assert!(rd.rankings.windows(2).all(|w| w[0].frequency >= w[1].frequency));
        }
    }
}
