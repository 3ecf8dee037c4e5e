//! Combinators: fixed slot split within a batch, and a phase switch over
//! batches. Both broadcast every observation to all members.

use super::{Observation, ObservationArchive, Optimizer, OptimizerError, WarmStartOutcome};
use crate::space::Suggestion;

/// Largest-remainder apportionment of `k` slots; remainder ties go to the
/// lower index.
pub fn allocate_slots(k: usize, weights: &[f64]) -> Result<Vec<usize>, OptimizerError> {
    if weights.is_empty() {
        return Err(OptimizerError::Config(
            "ensemble needs at least one member".into(),
        ));
    }
    if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
        return Err(OptimizerError::Config(
            "ensemble weights must be finite and non-negative".into(),
        ));
    }
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return Err(OptimizerError::Config(
            "ensemble weights sum to zero".into(),
        ));
    }
    let quotas: Vec<f64> = weights.iter().map(|w| k as f64 * w / total).collect();
    let mut slots: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        (quotas[b] - quotas[b].floor())
            .total_cmp(&(quotas[a] - quotas[a].floor()))
            .then(a.cmp(&b))
    });
    let left = k - slots.iter().sum::<usize>();
    for &i in order.iter().take(left) {
        slots[i] += 1;
    }
    Ok(slots)
}

pub struct SlotSplit {
    members: Vec<Box<dyn Optimizer>>,
    weights: Vec<f64>,
}

impl SlotSplit {
    pub fn new(
        members: Vec<Box<dyn Optimizer>>,
        weights: Vec<f64>,
    ) -> Result<Self, OptimizerError> {
        if members.len() != weights.len() {
            return Err(OptimizerError::Config(format!(
                "{} ensemble members but {} weights",
                members.len(),
                weights.len()
            )));
        }
        allocate_slots(1, &weights)?;
        Ok(Self { members, weights })
    }
}

impl Optimizer for SlotSplit {
    fn suggest(&mut self, n: usize) -> Result<Vec<Suggestion>, OptimizerError> {
        let slots = allocate_slots(n, &self.weights)?;
        let mut out = Vec::with_capacity(n);
        for (m, k) in self.members.iter_mut().zip(slots) {
            if k > 0 {
                let got = m.suggest(k)?;
                if got.len() != k {
                    return Err(OptimizerError::Internal(format!(
                        "member returned {} of {k} suggestions",
                        got.len()
                    )));
                }
                out.extend(got);
            }
        }
        Ok(out)
    }

    fn observe(&mut self, batch: &[Observation]) -> Result<(), OptimizerError> {
        for m in &mut self.members {
            m.observe(batch)?;
        }
        Ok(())
    }

    fn ingest_warm_start(&mut self, prior: &ObservationArchive) -> WarmStartOutcome {
        merge_outcomes(self.members.iter_mut().map(|m| m.ingest_warm_start(prior)))
    }
}

fn merge_outcomes(it: impl Iterator<Item = WarmStartOutcome>) -> WarmStartOutcome {
    it.fold(WarmStartOutcome::Ignored, |acc, o| match (acc, o) {
        (WarmStartOutcome::Ignored, o) => o,
        (a, WarmStartOutcome::Ignored) => a,
        (
            WarmStartOutcome::Accepted { queued, archived },
            WarmStartOutcome::Accepted {
                queued: q2,
                archived: a2,
            },
        ) => WarmStartOutcome::Accepted {
            queued: queued + q2,
            archived: archived + a2,
        },
    })
}

/// Batches `1..switch_batch` come from `first`, the rest from `second`.
pub struct PhaseSwitch {
    first: Box<dyn Optimizer>,
    second: Box<dyn Optimizer>,
    switch_batch: usize,
    batch: usize,
}

impl PhaseSwitch {
    pub fn new(
        first: Box<dyn Optimizer>,
        second: Box<dyn Optimizer>,
        switch_batch: usize,
    ) -> Result<Self, OptimizerError> {
        if switch_batch < 1 {
            return Err(OptimizerError::Config(
                "switch_batch must be at least 1".into(),
            ));
        }
        Ok(Self {
            first,
            second,
            switch_batch,
            batch: 0,
        })
    }
}

impl Optimizer for PhaseSwitch {
    fn suggest(&mut self, n: usize) -> Result<Vec<Suggestion>, OptimizerError> {
        self.batch += 1;
        if self.batch < self.switch_batch {
            self.first.suggest(n)
        } else {
            self.second.suggest(n)
        }
    }

    fn observe(&mut self, batch: &[Observation]) -> Result<(), OptimizerError> {
        self.first.observe(batch)?;
        self.second.observe(batch)
    }

    fn ingest_warm_start(&mut self, prior: &ObservationArchive) -> WarmStartOutcome {
        merge_outcomes(
            [
                self.first.ingest_warm_start(prior),
                self.second.ingest_warm_start(prior),
            ]
            .into_iter(),
        )
    }
}
