//! Warm-start wrapper: replays the best prior configurations first.

use std::collections::VecDeque;

use super::{
    Observation, ObservationArchive, Optimizer, OptimizerError, Provenance, WarmStartOutcome,
};
use crate::space::{SpaceSignature, Suggestion};

pub const WARM_TOP: usize = 8;

pub struct WarmStartAware {
    inner: Box<dyn Optimizer>,
    signature: SpaceSignature,
    queue: VecDeque<Suggestion>,
    archive: ObservationArchive,
}

impl WarmStartAware {
    pub fn new(inner: Box<dyn Optimizer>, signature: SpaceSignature) -> Self {
        Self {
            inner,
            archive: ObservationArchive::new(signature.clone()),
            signature,
            queue: VecDeque::new(),
        }
    }

    /// Prior points kept for reference; the inner optimizer never fits on them.
    pub fn archive(&self) -> &ObservationArchive {
        &self.archive
    }

    pub fn queued(&self) -> usize {
        self.queue.len()
    }
}

impl Optimizer for WarmStartAware {
    fn suggest(&mut self, n: usize) -> Result<Vec<Suggestion>, OptimizerError> {
        let take = n.min(self.queue.len());
        let mut out: Vec<Suggestion> = self.queue.drain(..take).collect();
        out.extend(self.inner.suggest(n - take)?);
        Ok(out)
    }

    fn observe(&mut self, batch: &[Observation]) -> Result<(), OptimizerError> {
        self.inner.observe(batch)
    }

    fn ingest_warm_start(&mut self, prior: &ObservationArchive) -> WarmStartOutcome {
        if prior.signature != self.signature {
            log::warn!(
                "warm start ignored: prior archive was recorded on a different search space"
            );
            return WarmStartOutcome::Ignored;
        }
        let mut queued = 0;
        let mut archived = 0;
        for e in prior.ranked() {
            if queued < WARM_TOP && !self.queue.contains(&e.suggestion) {
                self.queue.push_back(e.suggestion.clone());
                queued += 1;
            } else {
                self.archive.push(
                    Observation::new(e.suggestion.clone(), e.outcome),
                    Provenance::WarmStart,
                );
                archived += 1;
            }
        }
        for e in prior.entries.iter().filter(|e| e.outcome.loss().is_none()) {
            self.archive.push(
                Observation::new(e.suggestion.clone(), e.outcome),
                Provenance::WarmStart,
            );
            archived += 1;
        }
        WarmStartOutcome::Accepted { queued, archived }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optimizers::random::RandomSearch;
    use crate::optimizers::Outcome;
    use crate::space::{ParamSpec, SearchSpace, Value, Warp};

    fn space() -> SearchSpace {
        SearchSpace::new(vec![ParamSpec::real("x", 0.0, 1.0, Warp::Linear).unwrap()]).unwrap()
    }

    fn prior(sig: SpaceSignature, n: usize) -> ObservationArchive {
        let mut a = ObservationArchive::new(sig);
        for i in 0..n {
            let x = i as f64 / n as f64;
            a.push(
                Observation::new(
                    Suggestion::new().with("x", Value::Real(x)),
                    Outcome::Loss((x - 0.5).abs()),
                ),
                Provenance::ThisRun,
            );
        }
        a
    }

    #[test]
    fn first_batch_is_prior_top_eight() {
        let s = space();
        let mut w = WarmStartAware::new(Box::new(RandomSearch::new(s.clone(), 0)), s.signature());
        let p = prior(s.signature(), 50);
        assert_eq!(
            w.ingest_warm_start(&p),
            WarmStartOutcome::Accepted {
                queued: 8,
                archived: 42
            }
        );
        let batch = w.suggest(8).unwrap();
        let want: Vec<Suggestion> = p
            .ranked()
            .iter()
            .take(8)
            .map(|e| e.suggestion.clone())
            .collect();
        assert_eq!(batch, want);
        assert_eq!(w.archive().entries.len(), 42);
        assert!(w
            .archive()
            .entries
            .iter()
            .all(|e| e.provenance == Provenance::WarmStart));
        assert_eq!(w.suggest(8).unwrap().len(), 8);
    }

    #[test]
    fn signature_mismatch_is_ignored() {
        let s = space();
        let other =
            SearchSpace::new(vec![ParamSpec::real("y", 0.0, 1.0, Warp::Linear).unwrap()]).unwrap();
        let mut w = WarmStartAware::new(Box::new(RandomSearch::new(s.clone(), 0)), s.signature());
        assert_eq!(
            w.ingest_warm_start(&prior(other.signature(), 10)),
            WarmStartOutcome::Ignored
        );
        assert_eq!(w.queued(), 0);
        let mut plain = RandomSearch::new(s, 0);
        assert_eq!(w.suggest(8).unwrap(), plain.suggest(8).unwrap());
    }
}
