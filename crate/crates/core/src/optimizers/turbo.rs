//! Single trust-region BO with Thompson sampling (TuRBO-1 without restarts).

use std::collections::HashSet;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::design::latin_hypercube;
use super::gp::{FitOptions, Gp, GpHyper};
use super::gp_ei::bits_key;
use super::random::sample_in_box;
use super::{rng_from, History, Observation, Optimizer, OptimizerError};
use crate::space::{warp_value, ParamKind, SearchSpace, Suggestion, Value};

pub const INITIAL_SIDE: f64 = 0.8;
pub const L_MIN: f64 = 1.0 / 128.0;
pub const L_MAX: f64 = 1.6;
pub const SUCCESS_TOL: usize = 3;
const IMPROVE_REL: f64 = 1e-3;
const MIN_CANDIDATES: usize = 256;
const MAX_CANDIDATES: usize = 512;

/// Per-dimension side lengths and the success/failure counters.
#[derive(Debug, Clone, PartialEq)]
pub struct TrustRegionState {
    pub side: Vec<f64>,
    pub floors: Vec<f64>,
    pub success_count: usize,
    pub failure_count: usize,
    pub success_tol: usize,
    pub failure_tol: usize,
}

/// Smallest side that still lets every discrete coordinate move. Ints get the
/// largest gap between consecutive warped integers; one-hot and bool
/// coordinates always span the whole unit interval.
pub fn discrete_floors(space: &SearchSpace) -> Vec<f64> {
    let mut floors = vec![0.0; space.encoded_dim()];
    for (p, range) in space.blocks() {
        match p.kind() {
            ParamKind::Real { .. } => {}
            ParamKind::Int { lo, hi, .. } => {
                let w = |v: i64| warp_value(p, &Value::Int(v)).expect("in range");
                let (lo, hi) = (*lo, *hi);
                let probe: Vec<i64> = if hi - lo <= 100_000 {
                    (lo..hi).collect()
                } else {
                    [lo, hi - 1, -1, 0]
                        .into_iter()
                        .filter(|v| *v >= lo && *v < hi)
                        .collect()
                };
                let gap = probe
                    .into_iter()
                    .map(|v| (w(v + 1) - w(v)).abs())
                    .fold(0.0, f64::max);
                floors[range.start] = gap;
            }
            ParamKind::Cat { .. } | ParamKind::Bool => {
                for f in &mut floors[range] {
                    *f = 2.0;
                }
            }
        }
    }
    floors
}

impl TrustRegionState {
    pub fn new(space: &SearchSpace) -> Self {
        let floors = discrete_floors(space);
        Self {
            side: floors.iter().map(|f| INITIAL_SIDE.max(*f)).collect(),
            success_tol: SUCCESS_TOL,
            failure_tol: space.encoded_dim().max(1),
            floors,
            success_count: 0,
            failure_count: 0,
        }
    }

    fn rescale(&mut self, factor: f64) {
        for (s, f) in self.side.iter_mut().zip(&self.floors) {
            *s = (*s * factor).clamp(L_MIN, L_MAX).max(*f);
        }
    }

    pub fn update(&mut self, improved: bool) {
        if improved {
            self.success_count += 1;
            self.failure_count = 0;
            if self.success_count >= self.success_tol {
                self.rescale(2.0);
                self.success_count = 0;
            }
        } else {
            self.failure_count += 1;
            self.success_count = 0;
            if self.failure_count >= self.failure_tol {
                self.rescale(0.5);
                self.failure_count = 0;
            }
        }
    }

    /// Axis-aligned box around `center`, clipped to the unit cube.
    pub fn bounds(&self, center: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let lo = center
            .iter()
            .zip(&self.side)
            .map(|(c, s)| (c - s / 2.0).max(0.0))
            .collect();
        let hi = center
            .iter()
            .zip(&self.side)
            .map(|(c, s)| (c + s / 2.0).min(1.0))
            .collect();
        (lo, hi)
    }
}

pub struct TurboLite {
    history: History,
    state: TrustRegionState,
    rng: ChaCha8Rng,
    hyper: Option<GpHyper>,
    fit: FitOptions,
}

impl TurboLite {
    pub fn new(space: SearchSpace, seed: u64) -> Self {
        Self {
            state: TrustRegionState::new(&space),
            history: History::new(space),
            rng: rng_from(seed),
            hyper: None,
            fit: FitOptions::default(),
        }
    }

    pub fn state(&self) -> &TrustRegionState {
        &self.state
    }

    /// Points inside the doubled trust region, topped up with the nearest
    /// others so the GP always has some data.
    fn local_indices(&self, center: &[f64]) -> Vec<usize> {
        let d = center.len();
        let dist = |x: &[f64]| {
            x.iter()
                .zip(center)
                .zip(&self.state.side)
                .map(|((a, c), s)| (a - c).abs() / s)
                .fold(0.0, f64::max)
        };
        let mut order: Vec<(f64, usize)> = (0..self.history.len())
            .map(|i| (dist(&self.history.xs[i]), i))
            .collect();
        order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let inside = order.iter().filter(|(r, _)| *r <= 1.0).count();
        let keep = inside.max((2 * d + 2).max(10)).min(order.len());
        let mut idx: Vec<usize> = order[..keep].iter().map(|(_, i)| *i).collect();
        idx.sort_unstable();
        idx
    }

    fn candidates(
        &mut self,
        center: &[f64],
        lo: &[f64],
        hi: &[f64],
    ) -> Vec<(Suggestion, Vec<f64>)> {
        let d = center.len();
        let count = (64 * d).clamp(MIN_CANDIDATES, MAX_CANDIDATES);
        let prob = (20.0 / d as f64).min(1.0);
        let mut seen = HashSet::new();
        let mut out = Vec::with_capacity(count);
        for _ in 0..count {
            let mut u = center.to_vec();
            let mut moved = false;
            for j in 0..d {
                if self.rng.gen::<f64>() < prob {
                    u[j] = lo[j] + (hi[j] - lo[j]) * self.rng.gen::<f64>();
                    moved = true;
                }
            }
            if !moved {
                let j = self.rng.gen_range(0..d);
                u[j] = lo[j] + (hi[j] - lo[j]) * self.rng.gen::<f64>();
            }
            let (s, e) = self.history.space.snap(&u).expect("cube point decodes");
            if seen.insert(bits_key(&e)) {
                out.push((s, e));
            }
        }
        out
    }

    fn model_suggest(
        &mut self,
        n: usize,
        center: &[f64],
        lo: &[f64],
        hi: &[f64],
    ) -> Result<Vec<Suggestion>, String> {
        let idx = self.local_indices(center);
        let y = self
            .history
            .imputed(&idx)
            .ok_or("no finite observations in region")?;
        let x: Vec<Vec<f64>> = idx.iter().map(|&i| self.history.xs[i].clone()).collect();
        let gp = Gp::fit(&x, &y, self.fit, self.hyper.as_ref(), &mut self.rng)
            .map_err(|e| e.to_string())?;
        self.hyper = Some(gp.hyper().clone());

        let observed: HashSet<Vec<u64>> = self.history.xs.iter().map(|v| bits_key(v)).collect();
        let pool: Vec<(Suggestion, Vec<f64>)> = self
            .candidates(center, lo, hi)
            .into_iter()
            .filter(|(_, e)| !observed.contains(&bits_key(e)))
            .collect();
        if pool.is_empty() {
            return Err("trust region holds no unseen candidates".into());
        }
        let cands: Vec<Vec<f64>> = pool.iter().map(|(_, e)| e.clone()).collect();
        let post = gp.posterior(&cands);
        let c = cands.len();
        let mut cov = post.cov_matrix(&gp, &cands);
        let mut chol = None;
        for jitter in [1e-10, 1e-8, 1e-6, 1e-4] {
            for i in 0..c {
                cov[(i, i)] += jitter;
            }
            if let Some(l) = cov.clone().cholesky() {
                chol = Some(l.unpack());
                break;
            }
        }
        let mut taken = vec![false; c];
        let mut picks = Vec::with_capacity(n);
        for _ in 0..n.min(c) {
            let z: Vec<f64> = (0..c)
                .map(|_| StandardNormal.sample(&mut self.rng))
                .collect();
            let draw: Vec<f64> = match &chol {
                Some(l) => (0..c)
                    .map(|i| post.mean[i] + (0..=i).map(|k| l[(i, k)] * z[k]).sum::<f64>())
                    .collect(),
                None => (0..c)
                    .map(|i| post.mean[i] + post.var[i].sqrt() * z[i])
                    .collect(),
            };
            let mut arg: Option<usize> = None;
            for i in 0..c {
                if !taken[i] && arg.is_none_or(|a| draw[i] < draw[a]) {
                    arg = Some(i);
                }
            }
            let i = arg.expect("fewer picks than candidates");
            taken[i] = true;
            picks.push(pool[i].0.clone());
        }
        Ok(picks)
    }
}

impl Optimizer for TurboLite {
    fn suggest(&mut self, n: usize) -> Result<Vec<Suggestion>, OptimizerError> {
        if n == 0 {
            return Ok(Vec::new());
        }
        let space = self.history.space.clone();
        let Some((best, _)) = self.history.best() else {
            return Ok(latin_hypercube(&space, n, &mut self.rng));
        };
        let center = self.history.xs[best].clone();
        let (lo, hi) = self.state.bounds(&center);
        let mut picks = match self.model_suggest(n, &center, &lo, &hi) {
            Ok(v) => v,
            Err(e) => {
                log::warn!(
                    "turbo-lite: surrogate unavailable ({e}); sampling inside the trust region"
                );
                Vec::new()
            }
        };
        while picks.len() < n {
            picks.push(sample_in_box(&space, &lo, &hi, &mut self.rng).0);
        }
        Ok(picks)
    }

    fn observe(&mut self, batch: &[Observation]) -> Result<(), OptimizerError> {
        let prev = self.history.best().map(|(_, v)| v);
        self.history.record(batch)?;
        let batch_best = batch
            .iter()
            .filter_map(|o| o.outcome.loss())
            .fold(f64::INFINITY, f64::min);
        if let Some(prev) = prev {
            self.state
                .update(batch_best < prev - IMPROVE_REL * prev.abs());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optimizers::Outcome;
    use crate::space::{ParamSpec, Warp};

    fn space() -> SearchSpace {
        SearchSpace::new(vec![
            ParamSpec::real("a", 0.0, 1.0, Warp::Linear).unwrap(),
            ParamSpec::real("b", 0.0, 1.0, Warp::Linear).unwrap(),
            ParamSpec::int("k", 0, 8, Warp::Linear).unwrap(),
        ])
        .unwrap()
    }

    #[test]
    fn three_successes_double_the_side() {
        let mut tr = TrustRegionState::new(&space());
        tr.side = vec![0.4; 3];
        for _ in 0..3 {
            tr.update(true);
        }
        assert_eq!(tr.side[0], 0.8);
        assert_eq!(tr.success_count, 0);
    }

    #[test]
    fn failures_halve_after_failure_tol() {
        let mut tr = TrustRegionState::new(&space());
        assert_eq!(tr.failure_tol, 3);
        tr.update(false);
        tr.update(false);
        assert_eq!(tr.side[0], 0.8);
        tr.update(false);
        assert_eq!(tr.side[0], 0.4);
    }

    #[test]
    fn side_stays_between_limits() {
        let mut tr = TrustRegionState::new(&space());
        for _ in 0..200 {
            tr.update(false);
        }
        assert_eq!(tr.side[0], L_MIN);
        for _ in 0..200 {
            tr.update(true);
        }
        assert_eq!(tr.side[0], L_MAX);
    }

    #[test]
    fn int_floor_survives_shrinking() {
        let mut tr = TrustRegionState::new(&space());
        for _ in 0..100 {
            tr.update(false);
        }
        assert_eq!(tr.side[2], 0.125);
    }

    #[test]
    fn log_int_floor_is_the_widest_gap() {
        let s = SearchSpace::new(vec![ParamSpec::int("n", 1, 40, Warp::Log).unwrap()]).unwrap();
        let f = discrete_floors(&s);
        assert!((f[0] - 2f64.ln() / 40f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn improvement_needs_relative_margin() {
        let mut t = TurboLite::new(space(), 0);
        let s = t.suggest(1).unwrap().remove(0);
        t.observe(&[Observation::new(s.clone(), Outcome::Loss(1.0))])
            .unwrap();
        t.observe(&[Observation::new(s.clone(), Outcome::Loss(0.9995))])
            .unwrap();
        assert_eq!(t.state().failure_count, 1);
        t.observe(&[Observation::new(s, Outcome::Loss(0.99))])
            .unwrap();
        assert_eq!(t.state().success_count, 1);
    }

    #[test]
    fn suggestions_stay_inside_region() {
        let mut t = TurboLite::new(space(), 2);
        let first = t.suggest(8).unwrap();
        let obs: Vec<Observation> = first
            .iter()
            .map(|s| {
                Observation::new(
                    s.clone(),
                    Outcome::Loss((s.real("a").unwrap() - 0.3).powi(2)),
                )
            })
            .collect();
        t.observe(&obs).unwrap();
        for _ in 0..3 {
            t.observe(&obs).unwrap();
        }
        let (bi, _) = t.history.best().unwrap();
        let center = t.history.xs[bi].clone();
        let (lo, hi) = t.state.bounds(&center);
        for s in t.suggest(8).unwrap() {
            let u = t.history.space.encode(&s).unwrap();
            for j in 0..2 {
                assert!(u[j] >= lo[j] - 1e-12 && u[j] <= hi[j] + 1e-12);
            }
        }
    }
}
