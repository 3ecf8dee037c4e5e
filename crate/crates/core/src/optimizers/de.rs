//! Differential evolution, rand/1/bin with greedy replacement.

use rand::seq::index::sample;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::gp_ei::bits_key;
use super::random::sample_uniform;
use super::{rng_from, History, Observation, Optimizer, OptimizerError};
use crate::space::{SearchSpace, Suggestion};

pub const POPULATION: usize = 24;
pub const F: f64 = 0.8;
pub const CR: f64 = 0.9;

#[derive(Debug, Clone, PartialEq)]
pub struct Member {
    pub x: Vec<f64>,
    pub suggestion: Suggestion,
    /// `None` until evaluated; crashes are `+inf`.
    pub fitness: Option<f64>,
}

#[derive(Debug, Clone, Copy)]
enum Pending {
    Init(usize),
    Trial(usize),
}

pub struct DifferentialEvolution {
    history: History,
    rng: ChaCha8Rng,
    population: Vec<Member>,
    pending: Vec<(Vec<u64>, Pending)>,
    cursor: usize,
    size: usize,
}

impl DifferentialEvolution {
    pub fn new(space: SearchSpace, seed: u64) -> Self {
        Self::with_population(space, seed, POPULATION)
    }

    pub fn with_population(space: SearchSpace, seed: u64, size: usize) -> Self {
        Self {
            history: History::new(space),
            rng: rng_from(seed),
            population: Vec::new(),
            pending: Vec::new(),
            cursor: 0,
            size: size.max(1),
        }
    }

    pub fn population(&self) -> &[Member] {
        &self.population
    }

    /// Seeds from the best archived points, padded with uniform draws.
    fn init_population(&mut self) {
        let mut order: Vec<usize> = (0..self.history.len()).collect();
        order.sort_by(|&a, &b| {
            let fa = self.history.losses[a].unwrap_or(f64::INFINITY);
            let fb = self.history.losses[b].unwrap_or(f64::INFINITY);
            fa.total_cmp(&fb).then(a.cmp(&b))
        });
        let space = self.history.space.clone();
        for &i in order.iter().take(self.size) {
            let x = self.history.xs[i].clone();
            self.population.push(Member {
                suggestion: space.decode(&x).expect("archived point decodes"),
                x,
                fitness: Some(self.history.losses[i].unwrap_or(f64::INFINITY)),
            });
        }
        while self.population.len() < self.size {
            let s = sample_uniform(&space, &mut self.rng);
            self.population.push(Member {
                x: space.encode(&s).expect("valid draw"),
                suggestion: s,
                fitness: None,
            });
        }
    }

    fn trial(&mut self, target: usize) -> (Suggestion, Vec<f64>) {
        let p = self.population.len();
        let d = self.population[target].x.len();
        let others: Vec<usize> = (0..p).filter(|&i| i != target).collect();
        let [r1, r2, r3] = if others.len() >= 3 {
            let pick = sample(&mut self.rng, others.len(), 3);
            [
                others[pick.index(0)],
                others[pick.index(1)],
                others[pick.index(2)],
            ]
        } else {
            [0, 1, 2].map(|_| self.rng.gen_range(0..p))
        };
        let (a, b, c) = (
            &self.population[r1].x,
            &self.population[r2].x,
            &self.population[r3].x,
        );
        let jrand = self.rng.gen_range(0..d.max(1));
        let base = &self.population[target].x;
        let u: Vec<f64> = (0..d)
            .map(|j| {
                if j == jrand || self.rng.gen::<f64>() < CR {
                    (a[j] + F * (b[j] - c[j])).clamp(0.0, 1.0)
                } else {
                    base[j]
                }
            })
            .collect();
        self.history.space.snap(&u).expect("clipped point decodes")
    }
}

impl Optimizer for DifferentialEvolution {
    fn suggest(&mut self, n: usize) -> Result<Vec<Suggestion>, OptimizerError> {
        if self.population.is_empty() && n > 0 {
            self.init_population();
        }
        let mut out = Vec::with_capacity(n);
        let queued: Vec<usize> = self
            .population
            .iter()
            .enumerate()
            .filter(|(i, m)| {
                m.fitness.is_none()
                    && !self
                        .pending
                        .iter()
                        .any(|(_, p)| matches!(p, Pending::Init(j) if j == i))
            })
            .map(|(i, _)| i)
            .collect();
        for i in queued.into_iter().take(n) {
            let m = &self.population[i];
            self.pending.push((bits_key(&m.x), Pending::Init(i)));
            out.push(m.suggestion.clone());
        }
        let evaluated: Vec<usize> = (0..self.population.len())
            .filter(|&i| self.population[i].fitness.is_some())
            .collect();
        while out.len() < n {
            if evaluated.is_empty() {
                let s = sample_uniform(&self.history.space, &mut self.rng);
                out.push(s);
                continue;
            }
            let target = evaluated[self.cursor % evaluated.len()];
            self.cursor += 1;
            let (s, x) = self.trial(target);
            self.pending.push((bits_key(&x), Pending::Trial(target)));
            out.push(s);
        }
        Ok(out)
    }

    fn observe(&mut self, batch: &[Observation]) -> Result<(), OptimizerError> {
        self.history.record(batch)?;
        let start = self.history.len() - batch.len();
        for (k, o) in batch.iter().enumerate() {
            let x = &self.history.xs[start + k];
            let key = bits_key(x);
            let Some(pos) = self.pending.iter().position(|(kk, _)| *kk == key) else {
                continue;
            };
            let (_, what) = self.pending.remove(pos);
            let f = o.outcome.or_inf();
            match what {
                Pending::Init(i) => self.population[i].fitness = Some(f),
                Pending::Trial(i) => {
                    let cur = self.population[i].fitness.unwrap_or(f64::INFINITY);
                    if f <= cur {
                        self.population[i] = Member {
                            x: x.clone(),
                            suggestion: o.suggestion.clone(),
                            fitness: Some(f),
                        };
                    }
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optimizers::Outcome;
    use crate::space::{ParamSpec, Value, Warp};

    fn space(d: usize) -> SearchSpace {
        SearchSpace::new(
            (0..d)
                .map(|i| ParamSpec::real(format!("x{i}"), -1.0, 1.0, Warp::Linear).unwrap())
                .collect(),
        )
        .unwrap()
    }

    fn sphere(s: &Suggestion) -> f64 {
        s.iter().map(|(_, v)| v.as_f64().unwrap().powi(2)).sum()
    }

    #[test]
    fn population_seeds_from_best_archive_points() {
        let mut de = DifferentialEvolution::new(space(1), 0);
        let obs: Vec<Observation> = (0..30)
            .map(|i| {
                let x = -1.0 + i as f64 / 15.0;
                Observation::new(
                    Suggestion::new().with("x0", Value::Real(x)),
                    Outcome::Loss(x * x),
                )
            })
            .collect();
        de.observe(&obs).unwrap();
        de.suggest(0).unwrap();
        de.suggest(1).unwrap();
        let mut mine: Vec<f64> = de.population().iter().map(|m| m.fitness.unwrap()).collect();
        let mut want: Vec<f64> = obs.iter().map(|o| o.outcome.or_inf()).collect();
        want.sort_by(f64::total_cmp);
        want.truncate(24);
        mine.sort_by(f64::total_cmp);
        assert_eq!(mine, want);
    }

    #[test]
    fn unevaluated_members_go_first() {
        let mut de = DifferentialEvolution::new(space(2), 1);
        let a = de.suggest(8).unwrap();
        assert_eq!(
            a,
            de.population()[..8]
                .iter()
                .map(|m| m.suggestion.clone())
                .collect::<Vec<_>>()
        );
    }

    #[test]
    fn best_fitness_never_gets_worse() {
        let mut de = DifferentialEvolution::new(space(3), 7);
        let mut best = Vec::new();
        for _ in 0..21 {
            let batch = de.suggest(POPULATION).unwrap();
            let obs: Vec<Observation> = batch
                .into_iter()
                .map(|s| Observation::new(s.clone(), Outcome::Loss(sphere(&s))))
                .collect();
            de.observe(&obs).unwrap();
            best.push(
                de.population()
                    .iter()
                    .filter_map(|m| m.fitness)
                    .fold(f64::INFINITY, f64::min),
            );
        }
        assert!(best.windows(2).all(|w| w[1] <= w[0]));
        assert!(best.last().unwrap() < &best[0]);
    }

    #[test]
    fn collapsed_population_yields_that_point() {
        let mut de = DifferentialEvolution::with_population(space(2), 3, 5);
        let p = Suggestion::new()
            .with("x0", Value::Real(0.25))
            .with("x1", Value::Real(-0.5));
        let obs: Vec<Observation> = (0..5)
            .map(|_| Observation::new(p.clone(), Outcome::Loss(1.0)))
            .collect();
        de.observe(&obs).unwrap();
        for s in de.suggest(6).unwrap() {
            assert_eq!(s, p);
        }
    }

    #[test]
    fn crashes_lose_selection() {
        let mut de = DifferentialEvolution::with_population(space(1), 5, 4);
        let batch = de.suggest(4).unwrap();
        let obs: Vec<Observation> = batch
            .iter()
            .map(|s| Observation::new(s.clone(), Outcome::Loss(1.0)))
            .collect();
        de.observe(&obs).unwrap();
        let trials = de.suggest(4).unwrap();
        let obs: Vec<Observation> = trials
            .iter()
            .map(|s| Observation::new(s.clone(), Outcome::Crash))
            .collect();
        de.observe(&obs).unwrap();
        assert!(de.population().iter().all(|m| m.fitness == Some(1.0)));
    }
}
