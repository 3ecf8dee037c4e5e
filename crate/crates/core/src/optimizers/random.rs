use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{rng_from, Observation, Optimizer, OptimizerError};
use crate::space::{ParamKind, SearchSpace, Suggestion, Value};

/// Uniform sample in warped space; categoricals uniform over labels.
pub fn sample_uniform<R: Rng>(space: &SearchSpace, rng: &mut R) -> Suggestion {
    space
        .params()
        .iter()
        .map(|p| {
            let v = match p.kind() {
                ParamKind::Cat { values } => {
                    Value::Cat(values[rng.gen_range(0..values.len())].clone())
                }
                _ => crate::space::unwarp_value(p, rng.gen::<f64>()).expect("unit draw"),
            };
            (p.name().to_string(), v)
        })
        .collect()
}

/// Uniform sample in an encoded box, snapped to a valid point.
pub fn sample_in_box<R: Rng>(
    space: &SearchSpace,
    lo: &[f64],
    hi: &[f64],
    rng: &mut R,
) -> (Suggestion, Vec<f64>) {
    let u: Vec<f64> = lo
        .iter()
        .zip(hi)
        .map(|(a, b)| a + (b - a) * rng.gen::<f64>())
        .collect();
    space.snap(&u).expect("box point decodes")
}

pub struct RandomSearch {
    space: SearchSpace,
    rng: ChaCha8Rng,
}

impl RandomSearch {
    pub fn new(space: SearchSpace, seed: u64) -> Self {
        Self {
            space,
            rng: rng_from(seed),
        }
    }
}

impl Optimizer for RandomSearch {
    fn suggest(&mut self, n: usize) -> Result<Vec<Suggestion>, OptimizerError> {
        Ok((0..n)
            .map(|_| sample_uniform(&self.space, &mut self.rng))
            .collect())
    }

    fn observe(&mut self, _batch: &[Observation]) -> Result<(), OptimizerError> {
        Ok(())
    }
}
