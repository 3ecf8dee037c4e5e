use bbo_arena::analysis::{pooled_rs_curve, rs_equivalence, RsCurve, RsEquivalence};
use bbo_arena::harness::SuiteRun;
use bbo_arena::scoring::{score_team, ProblemCalibration};
use serde::{Deserialize, Serialize};

use crate::{CliError, RsPool};

/// Team id whose evaluations form the random-search pool.
pub const RS_TEAM: &str = "random-search";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeaderboardRow {
    pub rank: usize,
    pub team: String,
    pub score: f64,
    pub median: f64,
    /// `None` when no random-search pool is available.
    pub rs: Option<RsEquivalence>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Leaderboard {
    /// Evaluations per study.
    pub budget: usize,
    pub rows: Vec<LeaderboardRow>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub warnings: Vec<String>,
}

pub const CSV_HEADER: [&str; 6] = [
    "rank",
    "team",
    "score",
    "median",
    "rs_iters",
    "rs_efficiency",
];

impl Leaderboard {
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(CSV_HEADER).expect("in-memory write");
        for r in &self.rows {
            let (it, eff) = self.rs_labels(r);
            w.write_record([
                r.rank.to_string(),
                r.team.clone(),
                format!("{:.3}", r.score),
                format!("{:.3}", r.median),
                it,
                eff,
            ])
            .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
    }

    fn rs_labels(&self, r: &LeaderboardRow) -> (String, String) {
        match &r.rs {
            Some(e) => (e.iters_label(), e.efficiency_label(self.budget)),
            None => (String::new(), String::new()),
        }
    }

    /// Fixed-width text rendering.
    pub fn table(&self) -> String {
        let width = self
            .rows
            .iter()
            .map(|r| r.team.len())
            .max()
            .unwrap_or(4)
            .max(4);
        let mut out = format!(
            "{:>4}  {:<width$}  {:>8}  {:>8}  {:>9}  {:>8}\n",
            "Rank", "Team", "Score", "Median", "RS Iters", "RS Eff"
        );
        for r in &self.rows {
            let (it, eff) = self.rs_labels(r);
            out.push_str(&format!(
                "{:>4}  {:<width$}  {:>8.3}  {:>8.3}  {:>9}  {:>8}\n",
                r.rank, r.team, r.score, r.median, it, eff
            ));
        }
        out
    }
}

/// Scores every team, ranks by score (ties by id) and attaches random-search
/// equivalents when a random-search pool is available. The random-search
/// team's own row is pinned to the study budget and efficiency 1.
pub fn build_leaderboard(
    run: &SuiteRun,
    cals: &[ProblemCalibration],
    pool: Option<&RsPool>,
) -> Result<(Leaderboard, Option<RsCurve>), CliError> {
    let budget = run.config.evaluations();
    let mut warnings = Vec::new();
    let curve = match (run.team(RS_TEAM), pool) {
        (Some(_), Some(pool)) => {
            if pool.problems != run.problems {
                return Err(CliError::Data(
                    "random-search pool problems do not match the results".into(),
                ));
            }
            Some(pooled_rs_curve(&pool.losses(), cals, None)?)
        }
        (rs, _) => {
            let msg = if rs.is_none() {
                format!("no `{RS_TEAM}` results: RS iteration columns are omitted")
            } else {
                "no random-search pool: RS iteration columns are omitted".to_string()
            };
            log::warn!("{msg}");
            warnings.push(msg);
            None
        }
    };
    let mut rows = Vec::with_capacity(run.teams.len());
    for t in &run.teams {
        let rep = score_team(&t.team, &t.tensor, cals)?;
        let rs = curve.as_ref().map(|c| {
            if t.team == RS_TEAM {
                RsEquivalence::Iters {
                    rs_iters: budget as f64,
                    rs_efficiency: 1.0,
                }
            } else {
                rs_equivalence(rep.score, c, budget)
            }
        });
        rows.push(LeaderboardRow {
            rank: 0,
            team: t.team.clone(),
            score: rep.score,
            median: rep.median,
            rs,
        });
    }
    rows.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then_with(|| a.team.cmp(&b.team))
    });
    for (i, r) in rows.iter_mut().enumerate() {
        r.rank = i + 1;
    }
    Ok((
        Leaderboard {
            budget,
            rows,
            warnings,
        },
        curve,
    ))
}
