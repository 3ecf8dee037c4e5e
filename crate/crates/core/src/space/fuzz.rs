//! Random search spaces for fuzzing optimizers and codecs.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{ParamSpec, SearchSpace, Suggestion, Value, Warp};

/// A valid space with 1 to `max_params` parameters of every kind and warp.
pub fn random_space(seed: u64, max_params: usize) -> SearchSpace {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(1..=max_params.max(1));
    let params = (0..n)
        .map(|i| random_param(&mut rng, format!("p{i}")))
        .collect();
    SearchSpace::new(params).expect("generated parameters are valid")
}

/// Equal up to 1e-12 relative error on reals; every other value must match exactly.
pub fn same_point(a: &Suggestion, b: &Suggestion) -> bool {
    a.len() == b.len()
        && a.iter().zip(b.iter()).all(|((ka, va), (kb, vb))| {
            ka == kb
                && match (va, vb) {
                    (Value::Real(x), Value::Real(y)) => {
                        (x - y).abs() <= 1e-12 * x.abs().max(y.abs()).max(1e-300)
                    }
                    _ => va == vb,
                }
        })
}

fn random_param<R: Rng>(rng: &mut R, name: String) -> ParamSpec {
    let spec = match rng.gen_range(0..8) {
        0 => {
            let lo = rng.gen_range(-50.0..50.0);
            ParamSpec::real(name, lo, lo + rng.gen_range(1e-3..100.0), Warp::Linear)
        }
        1 => {
            let lo = 10f64.powf(rng.gen_range(-6.0..2.0));
            ParamSpec::real(
                name,
                lo,
                lo * 10f64.powf(rng.gen_range(0.5..6.0)),
                Warp::Log,
            )
        }
        2 => {
            let lo = rng.gen_range(1e-4..0.5);
            ParamSpec::real(name, lo, rng.gen_range(lo + 1e-3..1.0 - 1e-4), Warp::Logit)
        }
        3 => {
            let lo = -(10f64.powf(rng.gen_range(-2.0..4.0)));
            ParamSpec::real(name, lo, 10f64.powf(rng.gen_range(-2.0..4.0)), Warp::Bilog)
        }
        4 => {
            let lo = rng.gen_range(-20..20);
            ParamSpec::int(name, lo, lo + rng.gen_range(1..40), Warp::Linear)
        }
        5 => {
            let lo = rng.gen_range(1..10);
            ParamSpec::int(name, lo, lo + rng.gen_range(1..2000), Warp::Log)
        }
        6 => {
            let k = rng.gen_range(1..6);
            ParamSpec::cat(name, (0..k).map(|j| format!("v{j}")))
        }
        _ => ParamSpec::boolean(name),
    };
    spec.expect("bounds satisfy the warp")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::{unwarp_value, warp_value, ParamKind};
    use proptest::prelude::*;
    use rand::Rng;

    fn uniform_suggestion(space: &SearchSpace, rng: &mut ChaCha8Rng) -> crate::space::Suggestion {
        let u: Vec<f64> = (0..space.encoded_dim()).map(|_| rng.gen::<f64>()).collect();
        space.decode(&u).unwrap()
    }

    proptest! {
        #[test]
        fn encode_decode_round_trips(seed in any::<u64>()) {
            let space = random_space(seed, 6);
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 1);
            for _ in 0..5 {
                let s = uniform_suggestion(&space, &mut rng);
                space.validate(&s).unwrap();
                let u = space.encode(&s).unwrap();
                prop_assert!(same_point(&space.decode(&u).unwrap(), &s));
            }
        }

        #[test]
        fn encoding_lies_in_the_cube_with_one_hot_blocks(seed in any::<u64>()) {
            let space = random_space(seed, 6);
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 2);
            let u = space.encode(&uniform_suggestion(&space, &mut rng)).unwrap();
            prop_assert_eq!(u.len(), space.encoded_dim());
            prop_assert!(u.iter().all(|x| (0.0..=1.0).contains(x)));
            for (p, r) in space.blocks() {
                if let ParamKind::Cat { .. } = p.kind() {
                    prop_assert_eq!(u[r.clone()].iter().sum::<f64>(), 1.0);
                    prop_assert_eq!(u[r].iter().filter(|&&x| x == 1.0).count(), 1);
                }
            }
        }

        #[test]
        fn warp_is_monotone_with_fixed_endpoints(seed in any::<u64>(), a in 0.0..1.0f64, b in 0.0..1.0f64) {
            let space = random_space(seed, 6);
            for p in space.params() {
                let (lo, hi) = match p.kind() {
                    ParamKind::Real { lo, hi, .. } => (Value::Real(*lo), Value::Real(*hi)),
                    ParamKind::Int { lo, hi, .. } => (Value::Int(*lo), Value::Int(*hi)),
                    _ => continue,
                };
                prop_assert_eq!(warp_value(p, &lo).unwrap(), 0.0);
                prop_assert_eq!(warp_value(p, &hi).unwrap(), 1.0);
                let (a, b) = if a <= b { (a, b) } else { (b, a) };
                let xa = unwarp_value(p, a).unwrap().as_f64().unwrap();
                let xb = unwarp_value(p, b).unwrap().as_f64().unwrap();
                prop_assert!(xa <= xb);
                let wa = warp_value(p, &unwarp_value(p, a).unwrap()).unwrap();
                let wb = warp_value(p, &unwarp_value(p, b).unwrap()).unwrap();
                prop_assert!(wa <= wb);
            }
        }

        #[test]
        fn anonymizing_keeps_structure(seed in any::<u64>()) {
            let space = random_space(seed, 6);
            let (anon, map) = space.anonymize();
            prop_assert_eq!(anon.len(), space.len());
            prop_assert_eq!(anon.encoded_dim(), space.encoded_dim());
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 3);
            let s = uniform_suggestion(&space, &mut rng);
            let aliased = map.to_alias(&s);
            anon.validate(&aliased).unwrap();
            prop_assert_eq!(map.to_original(&aliased), s);
        }
    }
}
