//! Space-filling initial designs.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::space::{SearchSpace, Suggestion};

/// Latin hypercube over the encoded cube, snapped to valid points.
/// One-hot blocks are stratified per coordinate and decoded by argmax.
pub fn latin_hypercube<R: Rng>(space: &SearchSpace, n: usize, rng: &mut R) -> Vec<Suggestion> {
    latin_hypercube_in(
        space,
        n,
        &vec![0.0; space.encoded_dim()],
        &vec![1.0; space.encoded_dim()],
        rng,
    )
}

/// Latin hypercube restricted to the box `[lo, hi]`.
pub fn latin_hypercube_in<R: Rng>(
    space: &SearchSpace,
    n: usize,
    lo: &[f64],
    hi: &[f64],
    rng: &mut R,
) -> Vec<Suggestion> {
    if n == 0 {
        return Vec::new();
    }
    let d = space.encoded_dim();
    let mut cols: Vec<Vec<f64>> = Vec::with_capacity(d);
    for j in 0..d {
        let mut strata: Vec<usize> = (0..n).collect();
        strata.shuffle(rng);
        cols.push(
            strata
                .into_iter()
                .map(|s| lo[j] + (hi[j] - lo[j]) * (s as f64 + rng.gen::<f64>()) / n as f64)
                .collect(),
        );
    }
    (0..n)
        .map(|i| {
            let u: Vec<f64> = (0..d).map(|j| cols[j][i]).collect();
            space.snap(&u).expect("cube point decodes").0
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::{ParamSpec, Warp};
    use rand::SeedableRng;

    #[test]
    fn one_point_per_stratum() {
        let space = SearchSpace::new(vec![
            ParamSpec::real("a", 0.0, 1.0, Warp::Linear).unwrap(),
            ParamSpec::real("b", 0.0, 1.0, Warp::Linear).unwrap(),
        ])
        .unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let pts = latin_hypercube(&space, 8, &mut rng);
        for name in ["a", "b"] {
            let mut bins: Vec<usize> = pts
                .iter()
                .map(|s| (s.real(name).unwrap() * 8.0) as usize)
                .collect();
            bins.sort();
            assert_eq!(bins, (0..8).collect::<Vec<_>>());
        }
    }
}
