use proptest::prelude::*;

use super::turbo::{discrete_floors, TrustRegionState, L_MAX, L_MIN};
use super::{build_optimizer, parse_strategy, Observation, Outcome};
use crate::space::fuzz::random_space;
use crate::space::{SearchSpace, Suggestion};

const IDS: [&str; 7] = [
    "random-search",
    "turbo-lite",
    "gp-ei",
    "de",
    "ensemble:turbo-lite+gp-ei",
    "switch:de/gp-ei@2",
    "ws:turbo-lite",
];

/// Pseudo-loss from the encoding; roughly a quarter of points crash.
fn loss(space: &SearchSpace, s: &Suggestion) -> Outcome {
    let u = space.encode(s).unwrap();
    let v: f64 = u
        .iter()
        .enumerate()
        .map(|(i, x)| (x - 0.3 - 0.05 * i as f64).powi(2))
        .sum();
    if ((v * 1e4) as u64).is_multiple_of(4) {
        Outcome::Crash
    } else {
        Outcome::Loss(v)
    }
}

fn drive(id: &str, space: &SearchSpace, seed: u64, batches: usize, k: usize) -> Vec<Suggestion> {
    let mut o = build_optimizer(&parse_strategy(id).unwrap(), space, seed).unwrap();
    let mut all = Vec::new();
    for _ in 0..batches {
        let batch = o.suggest(k).unwrap();
        assert_eq!(batch.len(), k, "{id}");
        for s in &batch {
            space.validate(s).unwrap_or_else(|e| panic!("{id}: {e}"));
        }
        let obs: Vec<_> = batch
            .iter()
            .map(|s| Observation::new(s.clone(), loss(space, s)))
            .collect();
        o.observe(&obs).unwrap();
        all.extend(batch);
    }
    all
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn suggestions_are_valid_and_deterministic(seed in any::<u64>(), k in 1usize..6) {
        let space = random_space(seed, 5);
        for id in IDS {
            let a = drive(id, &space, seed, 4, k);
            prop_assert_eq!(&a, &drive(id, &space, seed, 4, k), "{}", id);
        }
    }

    #[test]
    fn single_member_ensemble_matches_bare_member(seed in any::<u64>()) {
        let space = random_space(seed, 5);
        for id in ["turbo-lite", "gp-ei", "de", "random-search"] {
            let solo = drive(&format!("ensemble:{id}"), &space, seed, 4, 3);
            prop_assert_eq!(solo, drive(id, &space, seed, 4, 3), "{}", id);
        }
    }
}

proptest! {
    #[test]
    fn trust_region_sides_stay_within_limits(seed in any::<u64>(), moves in proptest::collection::vec(any::<bool>(), 0..200)) {
        let space = random_space(seed, 6);
        let mut tr = TrustRegionState::new(&space);
        prop_assert_eq!(&tr.floors, &discrete_floors(&space));
        for improved in moves {
            tr.update(improved);
            for (s, f) in tr.side.iter().zip(&tr.floors) {
                prop_assert!(*s >= *f);
                prop_assert!(*s >= L_MIN && (*s <= L_MAX || *s == *f));
            }
        }
    }
}
