//! Batch black-box optimizers.
//!
//! Every optimizer minimizes. The harness drives the loop: `suggest(k)` then
//! `observe` with one outcome per suggestion. Observations may include
//! points the optimizer did not suggest (ensemble broadcast, warm start).

pub mod de;
pub mod design;
pub mod ensemble;
pub mod gp;
pub mod gp_ei;
pub mod random;
pub mod registry;
pub mod turbo;
pub mod warm;

#[cfg(test)]
mod contract_tests;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::space::{SearchSpace, SpaceError, SpaceSignature, Suggestion};

pub use registry::{build_optimizer, parse_strategy, StrategyConfig, StrategyKind};

#[derive(Debug, Error)]
pub enum OptimizerError {
    #[error("optimizer config error: {0}")]
    Config(String),
    #[error(transparent)]
    Space(#[from] SpaceError),
    #[error("optimizer failure: {0}")]
    Internal(String),
}

/// Result of one evaluation as seen by an optimizer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Outcome {
    Loss(f64),
    Crash,
}

impl Outcome {
    pub fn loss(self) -> Option<f64> {
        match self {
            Outcome::Loss(v) if v.is_finite() => Some(v),
            _ => None,
        }
    }

    /// Crashes and non-finite losses map to `+inf`.
    pub fn or_inf(self) -> f64 {
        self.loss().unwrap_or(f64::INFINITY)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub suggestion: Suggestion,
    pub outcome: Outcome,
}

impl Observation {
    pub fn new(suggestion: Suggestion, outcome: Outcome) -> Self {
        Self {
            suggestion,
            outcome,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    ThisRun,
    WarmStart,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchiveEntry {
    pub suggestion: Suggestion,
    pub outcome: Outcome,
    pub provenance: Provenance,
}

/// Observations tagged with the space they live in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationArchive {
    pub signature: SpaceSignature,
    pub entries: Vec<ArchiveEntry>,
}

impl ObservationArchive {
    pub fn new(signature: SpaceSignature) -> Self {
        Self {
            signature,
            entries: Vec::new(),
        }
    }

    pub fn push(&mut self, obs: Observation, provenance: Provenance) {
        self.entries.push(ArchiveEntry {
            suggestion: obs.suggestion,
            outcome: obs.outcome,
            provenance,
        });
    }

    /// Finite entries ordered by loss, ties in insertion order.
    pub fn ranked(&self) -> Vec<&ArchiveEntry> {
        let mut v: Vec<&ArchiveEntry> = self
            .entries
            .iter()
            .filter(|e| e.outcome.loss().is_some())
            .collect();
        v.sort_by(|a, b| a.outcome.or_inf().total_cmp(&b.outcome.or_inf()));
        v
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WarmStartOutcome {
    Ignored,
    Accepted { queued: usize, archived: usize },
}

pub trait Optimizer: Send {
    /// Proposes exactly `n` configurations.
    fn suggest(&mut self, n: usize) -> Result<Vec<Suggestion>, OptimizerError>;

    fn observe(&mut self, batch: &[Observation]) -> Result<(), OptimizerError>;

    fn ingest_warm_start(&mut self, _prior: &ObservationArchive) -> WarmStartOutcome {
        WarmStartOutcome::Ignored
    }
}

/// Encoded observation store shared by the model-based optimizers.
#[derive(Debug, Clone)]
pub(crate) struct History {
    pub space: SearchSpace,
    pub xs: Vec<Vec<f64>>,
    pub losses: Vec<Option<f64>>,
}

impl History {
    pub fn new(space: SearchSpace) -> Self {
        Self {
            space,
            xs: Vec::new(),
            losses: Vec::new(),
        }
    }

    pub fn record(&mut self, batch: &[Observation]) -> Result<(), OptimizerError> {
        for o in batch {
            let x = self.space.encode(&o.suggestion)?;
            self.xs.push(x);
            self.losses.push(o.outcome.loss());
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.xs.len()
    }

    pub fn n_finite(&self) -> usize {
        self.losses.iter().filter(|l| l.is_some()).count()
    }

    /// Index and loss of the best finite observation (earliest on ties).
    pub fn best(&self) -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64)> = None;
        for (i, l) in self.losses.iter().enumerate() {
            if let Some(v) = *l {
                if best.is_none_or(|(_, b)| v < b) {
                    best = Some((i, v));
                }
            }
        }
        best
    }

    /// Targets with crashes replaced by `worst + 0.1 |worst|`.
    pub fn imputed(&self, idx: &[usize]) -> Option<Vec<f64>> {
        let worst = idx
            .iter()
            .filter_map(|&i| self.losses[i])
            .fold(f64::NEG_INFINITY, f64::max);
        if !worst.is_finite() {
            return None;
        }
        let fill = worst + 0.1 * worst.abs();
        Some(
            idx.iter()
                .map(|&i| self.losses[i].unwrap_or(fill))
                .collect(),
        )
    }
}

pub(crate) fn rng_from(seed: u64) -> rand_chacha::ChaCha8Rng {
    use rand::SeedableRng;
    rand_chacha::ChaCha8Rng::seed_from_u64(seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::{ParamSpec, Value, Warp};

    #[test]
    fn crash_imputation_uses_worst_finite() {
        let space =
            SearchSpace::new(vec![ParamSpec::real("x", 0.0, 1.0, Warp::Linear).unwrap()]).unwrap();
        let mut h = History::new(space);
        let obs = |x: f64, o| Observation::new(Suggestion::new().with("x", Value::Real(x)), o);
        h.record(&[
            obs(0.1, Outcome::Loss(-2.0)),
            obs(0.2, Outcome::Crash),
            obs(0.3, Outcome::Loss(4.0)),
        ])
        .unwrap();
        assert_eq!(h.imputed(&[0, 1, 2]).unwrap(), vec![-2.0, 4.4, 4.0]);
        assert_eq!(h.best(), Some((0, -2.0)));
        assert!(h.imputed(&[1]).is_none());
    }

    #[test]
    fn outcome_serializes_compactly() {
        assert_eq!(
            serde_json::to_string(&Outcome::Loss(1.5)).unwrap(),
            r#"{"loss":1.5}"#
        );
        assert_eq!(
            serde_json::to_string(&Outcome::Crash).unwrap(),
            r#""crash""#
        );
    }
}
