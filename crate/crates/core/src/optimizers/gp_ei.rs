//! GP + expected improvement with constant-liar batching.

use std::collections::HashSet;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::design::latin_hypercube;
use super::gp::{expected_improvement, FitOptions, Gp, GpHyper};
use super::random::sample_uniform;
use super::{rng_from, History, Observation, Optimizer, OptimizerError};
use crate::space::{SearchSpace, Suggestion};

const POOL_PER_DIM: usize = 2048;
const POOL_CAP: usize = 100_000;
const LOCAL_SD: f64 = 0.05;
const LOCAL_FRACTION: f64 = 0.9;
const LOCAL_TOP: usize = 5;

pub struct GpEi {
    history: History,
    rng: ChaCha8Rng,
    hyper: Option<GpHyper>,
    fit: FitOptions,
    pool_size: usize,
}

pub(crate) fn bits_key(u: &[f64]) -> Vec<u64> {
    u.iter().map(|x| x.to_bits()).collect()
}

impl GpEi {
    pub fn new(space: SearchSpace, seed: u64) -> Self {
        let pool_size = (POOL_PER_DIM * space.encoded_dim()).min(POOL_CAP);
        Self {
            history: History::new(space),
            rng: rng_from(seed),
            hyper: None,
            fit: FitOptions::default(),
            pool_size,
        }
    }

    pub fn with_pool_size(mut self, n: usize) -> Self {
        self.pool_size = n.max(1);
        self
    }

    fn space(&self) -> &SearchSpace {
        &self.history.space
    }

    /// Mostly Gaussian perturbations of the best points, the rest uniform draws.
    fn candidate_pool(&mut self) -> Vec<(Suggestion, Vec<f64>)> {
        let space = self.history.space.clone();
        let mut ranked: Vec<usize> = (0..self.history.len())
            .filter(|&i| self.history.losses[i].is_some())
            .collect();
        ranked.sort_by(|&a, &b| {
            self.history.losses[a]
                .unwrap()
                .total_cmp(&self.history.losses[b].unwrap())
        });
        ranked.truncate(LOCAL_TOP);
        let n_local = if ranked.is_empty() {
            0
        } else {
            (self.pool_size as f64 * LOCAL_FRACTION) as usize
        };
        let noise = Normal::new(0.0, LOCAL_SD).expect("positive sd");
        let mut seen = HashSet::new();
        let mut out = Vec::with_capacity(self.pool_size);
        for i in 0..self.pool_size {
            let (s, e) = if i < n_local {
                let c = &self.history.xs[ranked[self.rng.gen_range(0..ranked.len())]];
                let u: Vec<f64> = c.iter().map(|x| x + noise.sample(&mut self.rng)).collect();
                space.snap(&u).expect("cube point decodes")
            } else {
                let s = sample_uniform(&space, &mut self.rng);
                let e = space.encode(&s).expect("valid draw");
                (s, e)
            };
            if seen.insert(bits_key(&e)) {
                out.push((s, e));
            }
        }
        out
    }

    fn model_suggest(&mut self, n: usize) -> Result<Vec<Suggestion>, String> {
        let idx: Vec<usize> = (0..self.history.len()).collect();
        let y = self.history.imputed(&idx).ok_or("no finite observations")?;
        let gp = Gp::fit(
            &self.history.xs,
            &y,
            self.fit,
            self.hyper.as_ref(),
            &mut self.rng,
        )
        .map_err(|e| e.to_string())?;
        self.hyper = Some(gp.hyper().clone());

        let observed: HashSet<Vec<u64>> = self.history.xs.iter().map(|x| bits_key(x)).collect();
        let pool: Vec<(Suggestion, Vec<f64>)> = self
            .candidate_pool()
            .into_iter()
            .filter(|(_, e)| !observed.contains(&bits_key(e)))
            .collect();
        let cands: Vec<Vec<f64>> = pool.iter().map(|(_, e)| e.clone()).collect();
        let post = gp.posterior(&cands);
        let (mut mean, mut var) = (post.mean.clone(), post.var.clone());
        let best = gp.best_standardized();
        let lie = best;
        let noise = gp.noise_var();

        // rank-1 conditioning on each pending point: cov_t = cov_0 - sum u_s u_s^T
        let mut factors: Vec<Vec<f64>> = Vec::new();
        let mut taken = vec![false; cands.len()];
        let mut picks = Vec::with_capacity(n);
        for _ in 0..n {
            let mut arg: Option<(usize, f64)> = None;
            for j in 0..cands.len() {
                if taken[j] {
                    continue;
                }
                let ei = expected_improvement(mean[j], var[j], best);
                if arg.is_none_or(|(_, b)| ei > b) {
                    arg = Some((j, ei));
                }
            }
            let Some((j, _)) = arg else { break };
            taken[j] = true;
            picks.push(pool[j].0.clone());

            let mut k = post.cov_column(&gp, &cands, j);
            for u in &factors {
                let uj = u[j];
                for (ka, ua) in k.iter_mut().zip(u) {
                    *ka -= ua * uj;
                }
            }
            let denom = var[j] + noise;
            let scale = 1.0 / denom.sqrt();
            let resid = lie - mean[j];
            for a in 0..cands.len() {
                mean[a] += k[a] * resid / denom;
                var[a] = (var[a] - k[a] * k[a] / denom).max(1e-12);
            }
            factors.push(k.into_iter().map(|v| v * scale).collect());
        }
        while picks.len() < n {
            picks.push(sample_uniform(&self.history.space, &mut self.rng));
        }
        Ok(picks)
    }
}

impl Optimizer for GpEi {
    fn suggest(&mut self, n: usize) -> Result<Vec<Suggestion>, OptimizerError> {
        if n == 0 {
            return Ok(Vec::new());
        }
        if self.history.n_finite() < 2 {
            let space = self.space().clone();
            return Ok(latin_hypercube(&space, n, &mut self.rng));
        }
        match self.model_suggest(n) {
            Ok(v) => Ok(v),
            Err(e) => {
                log::warn!("gp-ei: surrogate unavailable ({e}); sampling uniformly");
                let space = self.space().clone();
                Ok((0..n)
                    .map(|_| sample_uniform(&space, &mut self.rng))
                    .collect())
            }
        }
    }

    fn observe(&mut self, batch: &[Observation]) -> Result<(), OptimizerError> {
        self.history.record(batch)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optimizers::Outcome;
    use crate::space::{ParamSpec, Value, Warp};

    fn line() -> SearchSpace {
        SearchSpace::new(vec![ParamSpec::real("x", 0.0, 1.0, Warp::Linear).unwrap()]).unwrap()
    }

    #[test]
    fn first_model_pick_is_nearer_the_better_point() {
        let mut opt = GpEi::new(line(), 4).with_pool_size(2048);
        let obs = |x: f64, y: f64| {
            Observation::new(
                Suggestion::new().with("x", Value::Real(x)),
                Outcome::Loss(y),
            )
        };
        opt.observe(&[obs(0.2, 1.0), obs(0.8, 0.1)]).unwrap();
        let s = opt.suggest(1).unwrap();
        let x = s[0].real("x").unwrap();
        assert!((x - 0.8).abs() < (x - 0.2).abs(), "picked {x}");
    }

    #[test]
    fn batch_points_are_distinct() {
        let mut opt = GpEi::new(line(), 9).with_pool_size(512);
        let obs = |x: f64| {
            Observation::new(
                Suggestion::new().with("x", Value::Real(x)),
                Outcome::Loss((x - 0.3).powi(2)),
            )
        };
        opt.observe(&[obs(0.1), obs(0.5), obs(0.9)]).unwrap();
        let batch = opt.suggest(8).unwrap();
        let mut xs: Vec<f64> = batch.iter().map(|s| s.real("x").unwrap()).collect();
        xs.sort_by(f64::total_cmp);
        xs.dedup();
        assert_eq!(xs.len(), 8);
    }

    #[test]
    fn initial_design_until_two_finite() {
        let mut opt = GpEi::new(line(), 1);
        let batch = opt.suggest(8).unwrap();
        let mut bins: Vec<usize> = batch
            .iter()
            .map(|s| (s.real("x").unwrap() * 8.0) as usize)
            .collect();
        bins.sort();
        assert_eq!(bins, (0..8).collect::<Vec<_>>());
        let crash = Observation::new(batch[0].clone(), Outcome::Crash);
        opt.observe(&[crash]).unwrap();
        assert_eq!(opt.suggest(3).unwrap().len(), 3);
    }
}
