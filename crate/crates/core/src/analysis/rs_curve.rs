//! Expected best-of-m random search from a pooled sample.

use num_traits::{FromPrimitive, Num};
use serde::{Deserialize, Serialize};

use rayon::prelude::*;

use super::AnalysisError;
use crate::harness::StudyConfig;
use crate::optimizers::random::sample_uniform;
use crate::optimizers::rng_from;
use crate::problems::Problem;
use crate::scoring::{compensated_mean, is_degenerate, normalize, ProblemCalibration};
use crate::seed::SeedKey;

/// `E[min of m draws without replacement]` from an ascending pool:
/// `sum_i x(i) C(M-i, m-1) / C(M, m)`. Exact for exact number types.
pub fn expected_min<T>(sorted: &[T], m: usize) -> T
where
    T: Num + Clone + FromPrimitive,
{
    let big_m = sorted.len();
    assert!(m >= 1 && m <= big_m, "m must be in 1..=pool size");
    let from = |v: usize| T::from_usize(v).expect("usize converts");
    // w_1 = m/M, w_{i+1} = w_i (M-i-m+1)/(M-i)
    let mut w = from(m) / from(big_m);
    let mut acc = T::zero();
    for (idx, x) in sorted.iter().enumerate() {
        let i = idx + 1;
        acc = acc + x.clone() * w.clone();
        if i + m > big_m {
            break;
        }
        w = w * from(big_m - i - m + 1) / from(big_m - i);
    }
    acc
}

/// `expected_min` for every `m = 1..=m_max`, in floating point. Terms whose
/// weight has decayed below `1e-17` of the leading weight are skipped.
pub fn expected_min_curve(sorted: &[f64], m_max: usize) -> Vec<f64> {
    let big_m = sorted.len();
    (1..=m_max.min(big_m))
        .map(|m| {
            let mut w = m as f64 / big_m as f64;
            let floor = w * 1e-17;
            let mut terms = Vec::new();
            for (idx, &x) in sorted.iter().enumerate() {
                let i = idx + 1;
                terms.push(x * w);
                if i + m > big_m {
                    break;
                }
                w *= (big_m - i - m + 1) as f64 / (big_m - i) as f64;
                if w < floor {
                    break;
                }
            }
            crate::scoring::compensated_sum(terms)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RsCurve {
    pub problems: Vec<String>,
    /// `E_m` per problem for `m = 1..=m_max` (clipped losses).
    pub per_problem: Vec<Vec<f64>>,
    /// Leaderboard score of best-of-`m` random search, index `m - 1`.
    pub score: Vec<f64>,
    pub m_max: usize,
}

impl RsCurve {
    pub fn score_at(&self, m: usize) -> Option<f64> {
        m.checked_sub(1).and_then(|i| self.score.get(i)).copied()
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["m", "expected_score"])
            .expect("in-memory write");
        for (i, s) in self.score.iter().enumerate() {
            w.write_record([(i + 1).to_string(), format!("{s:.6}")])
                .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
    }
}

/// Random-search losses for one problem, one list per trial split
/// (`pools[n]` was evaluated with trial `n`'s seed). Crashes are `+inf`.
pub type TrialPools = Vec<Vec<f64>>;

/// Draws `per_trial` uniform random configurations for every trial split of
/// `problem` and evaluates them with that trial's seed.
pub fn sample_rs_pool(problem: &Problem, cfg: &StudyConfig, per_trial: usize) -> TrialPools {
    (0..cfg.trials)
        .map(|n| {
            let trial_seed = cfg.trial_seed(problem.id(), n);
            (0..per_trial)
                .into_par_iter()
                .map(|i| {
                    let key = SeedKey::new(cfg.seed)
                        .str("rs-pool")
                        .str(problem.id())
                        .int(n as u64)
                        .int(i as u64);
                    let s = sample_uniform(problem.space(), &mut rng_from(key.finish()));
                    problem.evaluate(&s, trial_seed).unwrap_or(f64::INFINITY)
                })
                .collect()
        })
        .collect()
}

/// Expected best-of-`m` random search per problem, averaged over trial
/// splits so that every draw of a size-`m` subset shares one split, like a
/// real study. Pools are clipped at `clip_p` first (clipping commutes with
/// the minimum), then normalized and averaged like a leaderboard score.
pub fn pooled_rs_curve(
    pools: &[TrialPools],
    cals: &[ProblemCalibration],
    m_max: Option<usize>,
) -> Result<RsCurve, AnalysisError> {
    if pools.len() != cals.len() || pools.is_empty() {
        return Err(AnalysisError::Config(format!(
            "{} pools for {} problems",
            pools.len(),
            cals.len()
        )));
    }
    let smallest = pools.iter().flatten().map(Vec::len).min().unwrap_or(0);
    if smallest == 0 {
        return Err(AnalysisError::Config("empty random-search pool".into()));
    }
    let m_max = match m_max {
        Some(m) if m > smallest => {
            return Err(AnalysisError::Extrapolation {
                requested: m,
                max: smallest,
            })
        }
        Some(m) => m,
        None => smallest,
    };
    let mut per_problem = Vec::with_capacity(pools.len());
    for (trials, cal) in pools.iter().zip(cals) {
        let curves: Vec<Vec<f64>> = trials
            .iter()
            .map(|pool| {
                let mut v: Vec<f64> = pool
                    .iter()
                    .map(|&x| if x < cal.clip { x } else { cal.clip })
                    .collect();
                v.sort_by(f64::total_cmp);
                expected_min_curve(&v, m_max)
            })
            .collect();
        per_problem.push(
            (0..m_max)
                .map(|i| compensated_mean(&curves.iter().map(|c| c[i]).collect::<Vec<_>>()))
                .collect::<Vec<f64>>(),
        );
    }
    let kept: Vec<usize> = (0..cals.len())
        .filter(|&p| !is_degenerate(&cals[p]))
        .collect();
    if kept.is_empty() {
        return Err(AnalysisError::Config("every problem is degenerate".into()));
    }
    let mut score: Vec<f64> = (0..m_max)
        .map(|i| {
            let norms: Vec<f64> = kept
                .iter()
                .map(|&p| normalize(per_problem[p][i], &cals[p]))
                .collect();
            100.0 * (1.0 - compensated_mean(&norms))
        })
        .collect();
    // guard against rounding wiggles so the curve is usable for search
    for i in 1..score.len() {
        if score[i] < score[i - 1] {
            score[i] = score[i - 1];
        }
    }
    Ok(RsCurve {
        problems: cals.iter().map(|c| c.problem.clone()).collect(),
        per_problem,
        score,
        m_max,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum RsEquivalence {
    Iters {
        rs_iters: f64,
        rs_efficiency: f64,
    },
    /// Better than random search with the whole pool.
    AboveMax {
        m_max: usize,
    },
    /// Worse than a single random guess.
    BelowOne,
}

impl RsEquivalence {
    pub fn iters_label(&self) -> String {
        match self {
            RsEquivalence::Iters { rs_iters, .. } => format!("{rs_iters:.1}"),
            RsEquivalence::AboveMax { m_max } => format!(">{m_max}"),
            RsEquivalence::BelowOne => "<1".into(),
        }
    }

    pub fn efficiency_label(&self, budget: usize) -> String {
        match self {
            RsEquivalence::Iters { rs_efficiency, .. } => format!("{rs_efficiency:.3}"),
            RsEquivalence::AboveMax { m_max } => format!(">{:.3}", *m_max as f64 / budget as f64),
            RsEquivalence::BelowOne => format!("<{:.3}", 1.0 / budget as f64),
        }
    }
}

/// Smallest `m` whose curve score reaches `score`, interpolated linearly in
/// `log m` between `m - 1` and `m`. Efficiency is relative to `budget`
/// evaluations.
pub fn rs_equivalence(score: f64, curve: &RsCurve, budget: usize) -> RsEquivalence {
    let s = &curve.score;
    if s.is_empty() || score > s[s.len() - 1] {
        return RsEquivalence::AboveMax { m_max: curve.m_max };
    }
    if score < s[0] {
        return RsEquivalence::BelowOne;
    }
    let idx = s.partition_point(|&v| v < score);
    let m = idx + 1;
    let iters = if m == 1 {
        1.0
    } else {
        let (lo, hi) = (s[idx - 1], s[idx]);
        let frac = if hi > lo {
            (score - lo) / (hi - lo)
        } else {
            1.0
        };
        let (a, b) = (((m - 1) as f64).ln(), (m as f64).ln());
        (a + frac * (b - a)).exp()
    };
    RsEquivalence::Iters {
        rs_iters: iters,
        rs_efficiency: iters / budget as f64,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cal(clip: f64, opt: f64) -> ProblemCalibration {
        ProblemCalibration {
            problem: "p".into(),
            clip,
            opt,
            known_opt: false,
            sample_min: opt,
            n_samples: 1000,
            crash_rate: 0.0,
            seed: 0,
        }
    }

    #[test]
    fn small_pool_examples() {
        let pool = [1.0, 2.0, 3.0, 4.0];
        assert!((expected_min(&pool, 2) - 10.0_f64 / 6.0).abs() < 1e-15);
        assert_eq!(expected_min(&pool, 1), 2.5);
        assert_eq!(expected_min(&pool, 4), 1.0);
        let curve = expected_min_curve(&pool, 4);
        assert!((curve[1] - 10.0 / 6.0).abs() < 1e-15);
        assert_eq!(curve[3], 1.0);
    }

    #[test]
    fn fast_curve_agrees_with_direct_sum() {
        let pool: Vec<f64> = (0..500).map(|i| ((i * 37) % 500) as f64 / 7.0).collect();
        let mut sorted = pool.clone();
        sorted.sort_by(f64::total_cmp);
        let fast = expected_min_curve(&sorted, 500);
        for m in [1, 2, 17, 128, 499, 500] {
            let direct = expected_min(&sorted, m);
            assert!(
                (fast[m - 1] - direct).abs() < 1e-9 * direct.abs().max(1.0),
                "m={m}"
            );
        }
    }

    #[test]
    fn extrapolation_is_refused() {
        let r = pooled_rs_curve(&[vec![vec![1.0, 2.0]]], &[cal(2.0, 1.0)], Some(3));
        assert!(matches!(
            r,
            Err(AnalysisError::Extrapolation {
                requested: 3,
                max: 2
            })
        ));
    }

    #[test]
    fn equivalence_on_a_known_curve() {
        let curve = RsCurve {
            problems: vec!["p".into()],
            per_problem: vec![],
            score: (1..=512).map(|m| 10.0 * (m as f64).ln()).collect(),
            m_max: 512,
        };
        match rs_equivalence(10.0 * 256f64.ln(), &curve, 128) {
            RsEquivalence::Iters {
                rs_iters,
                rs_efficiency,
            } => {
                assert!((rs_iters - 256.0).abs() < 1e-9);
                assert!((rs_efficiency - 2.0).abs() < 1e-12);
            }
            other => panic!("{other:?}"),
        }
        match rs_equivalence(10.0 * 100.5f64.ln(), &curve, 128) {
            RsEquivalence::Iters { rs_iters, .. } => assert!((rs_iters - 100.5).abs() < 1e-9),
            other => panic!("{other:?}"),
        }
        assert_eq!(
            rs_equivalence(1e9, &curve, 128),
            RsEquivalence::AboveMax { m_max: 512 }
        );
        assert_eq!(rs_equivalence(-1.0, &curve, 128), RsEquivalence::BelowOne);
    }

    #[test]
    fn trial_pools_average_per_split() {
        // best-of-2 stays within a split: mean(1.5, 11.5) rather than 8 pooled
        let c = cal(100.0, 0.0);
        let curve = pooled_rs_curve(&[vec![vec![1.0, 2.0], vec![11.0, 12.0]]], &[c], None).unwrap();
        assert_eq!(curve.m_max, 2);
        assert_eq!(curve.per_problem[0], vec![6.5, 6.0]);
    }

    #[test]
    fn pool_sampling_uses_trial_splits() {
        use crate::problems::synthetic::SyntheticKind;
        let p = Problem::synthetic(SyntheticKind::Sphere, Some(2));
        let cfg = StudyConfig {
            trials: 3,
            ..StudyConfig::default()
        };
        let pools = sample_rs_pool(&p, &cfg, 50);
        assert_eq!(pools.len(), 3);
        assert!(pools
            .iter()
            .all(|t| t.len() == 50 && t.iter().all(|v| (0.0..=2.0).contains(v))));
        assert_eq!(pools, sample_rs_pool(&p, &cfg, 50));
        assert_ne!(pools[0], pools[1]);
    }

    #[test]
    fn curve_is_monotone_and_starts_at_pool_mean() {
        let pool: Vec<f64> = (0..2000).map(|i| ((i * 7919) % 2000) as f64).collect();
        let c = cal(1000.0, 0.0);
        let curve = pooled_rs_curve(&[vec![pool.clone()]], std::slice::from_ref(&c), None).unwrap();
        let clipped: Vec<f64> = pool.iter().map(|&x| x.min(1000.0)).collect();
        let mean = clipped.iter().sum::<f64>() / clipped.len() as f64;
        assert!((curve.per_problem[0][0] - mean).abs() < 1e-9);
        assert!(curve.per_problem[0]
            .windows(2)
            .all(|w| w[1] <= w[0] + 1e-12));
        assert!(curve.score.windows(2).all(|w| w[1] >= w[0]));
    }

    fn brute_min(pool: &[f64], m: usize) -> f64 {
        let n = pool.len();
        let (mut total, mut count) = (0.0, 0usize);
        for mask in 0u32..(1 << n) {
            if mask.count_ones() as usize == m {
                total += (0..n)
                    .filter(|i| mask >> i & 1 == 1)
                    .map(|i| pool[i])
                    .fold(f64::INFINITY, f64::min);
                count += 1;
            }
        }
        total / count as f64
    }

    proptest::proptest! {
        #[test]
        fn expected_min_matches_subset_enumeration(pool in proptest::collection::vec(-100.0..100.0f64, 1..11)) {
            let mut sorted = pool.clone();
            sorted.sort_by(f64::total_cmp);
            let fast = expected_min_curve(&sorted, sorted.len());
            for m in 1..=sorted.len() {
                let b = brute_min(&pool, m);
                proptest::prop_assert!((expected_min(&sorted, m) - b).abs() < 1e-9);
                proptest::prop_assert!((fast[m - 1] - b).abs() < 1e-9);
            }
        }

        #[test]
        fn curves_improve_with_budget_and_equivalence_is_monotone(
            pools in proptest::collection::vec(proptest::collection::vec(0.0..10.0f64, 16..40), 1..4),
            a in 0.0..100.0f64,
            b in 0.0..100.0f64,
        ) {
            let cals: Vec<_> = (0..pools.len()).map(|_| cal(8.0, 0.0)).collect();
            let wrapped: Vec<TrialPools> = pools.iter().map(|p| vec![p.clone()]).collect();
            let curve = pooled_rs_curve(&wrapped, &cals, None).unwrap();
            for per in &curve.per_problem {
                proptest::prop_assert!(per.windows(2).all(|w| w[1] <= w[0] + 1e-12));
            }
            proptest::prop_assert!(curve.score.windows(2).all(|w| w[1] >= w[0]));
            let iters = |s: f64| match rs_equivalence(s, &curve, 8) {
                RsEquivalence::BelowOne => 0.0,
                RsEquivalence::Iters { rs_iters, .. } => rs_iters,
                RsEquivalence::AboveMax { .. } => f64::INFINITY,
            };
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            proptest::prop_assert!(iters(lo) <= iters(hi));
        }
    }
}
