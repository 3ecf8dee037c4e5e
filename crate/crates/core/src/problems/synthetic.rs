//! Synthetic objectives with analytically known optima.

use serde::{Deserialize, Serialize};

use crate::space::{ParamSpec, SearchSpace, Suggestion, Warp};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SyntheticKind {
    /// Sum of squares on `[-1, 1]^d`.
    Sphere,
    /// Branin-Hoo on `[-5, 10] x [0, 15]`.
    Branin,
    /// Rosenbrock on `[-2, 2]^d`.
    Rosenbrock,
    /// Separable quadratic over real, int, categorical and bool parameters.
    Mixed,
    /// Crashes whenever `tol < 1e-4`.
    CrashProbe,
}

pub const BRANIN_MIN: f64 = 0.397_887_357_729_738_2;

impl SyntheticKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SyntheticKind::Sphere => "sphere",
            SyntheticKind::Branin => "branin",
            SyntheticKind::Rosenbrock => "rosenbrock",
            SyntheticKind::Mixed => "mixed",
            SyntheticKind::CrashProbe => "crash-probe",
        }
    }

    /// Dimension used when a caller does not pick one; fixed-dimension
    /// functions ignore any request.
    pub fn dim(self, requested: Option<usize>) -> usize {
        match self {
            SyntheticKind::Sphere | SyntheticKind::Rosenbrock => requested.unwrap_or(2).max(1),
            SyntheticKind::Branin | SyntheticKind::CrashProbe => 2,
            SyntheticKind::Mixed => 4,
        }
    }

    pub fn space(self, dim: usize) -> SearchSpace {
        let x = |i: usize, lo, hi| ParamSpec::real(format!("x{i}"), lo, hi, Warp::Linear);
        let params = match self {
            SyntheticKind::Sphere => (0..dim).map(|i| x(i, -1.0, 1.0)).collect(),
            SyntheticKind::Rosenbrock => (0..dim).map(|i| x(i, -2.0, 2.0)).collect(),
            SyntheticKind::Branin => vec![x(0, -5.0, 10.0), x(1, 0.0, 15.0)],
            SyntheticKind::Mixed => vec![
                ParamSpec::real("x", -2.0, 2.0, Warp::Linear),
                ParamSpec::int("n", 0, 10, Warp::Linear),
                ParamSpec::cat("c", ["a", "b", "c"]),
                ParamSpec::boolean("flag"),
            ],
            SyntheticKind::CrashProbe => vec![
                ParamSpec::real("tol", 1e-6, 1e-1, Warp::Log),
                ParamSpec::real("x", -1.0, 1.0, Warp::Linear),
            ],
        };
        SearchSpace::new(
            params
                .into_iter()
                .collect::<Result<_, _>>()
                .expect("static spec"),
        )
        .expect("static space")
    }

    pub fn known_opt(self) -> f64 {
        match self {
            SyntheticKind::Branin => BRANIN_MIN,
            _ => 0.0,
        }
    }

    /// `Err` signals a deliberate crash.
    pub fn eval(self, s: &Suggestion, dim: usize) -> Result<f64, String> {
        let x = |i: usize| s.real(&format!("x{i}")).expect("validated");
        Ok(match self {
            SyntheticKind::Sphere => (0..dim).map(|i| x(i).powi(2)).sum(),
            SyntheticKind::Rosenbrock => (0..dim.saturating_sub(1))
                .map(|i| 100.0 * (x(i + 1) - x(i).powi(2)).powi(2) + (1.0 - x(i)).powi(2))
                .sum(),
            SyntheticKind::Branin => {
                use std::f64::consts::PI;
                let (x1, x2) = (x(0), x(1));
                let b = 5.1 / (4.0 * PI * PI);
                let c = 5.0 / PI;
                let t = 1.0 / (8.0 * PI);
                let v =
                    (x2 - b * x1 * x1 + c * x1 - 6.0).powi(2) + 10.0 * (1.0 - t) * x1.cos() + 10.0;
                // guard the analytic floor against rounding just below it
                v.max(BRANIN_MIN)
            }
            SyntheticKind::Mixed => {
                let xv = s.real("x").expect("validated");
                let n = s.real("n").expect("validated");
                let c = match s.get("c").and_then(|v| v.as_str()) {
                    Some("a") => 0.5,
                    Some("b") => 0.0,
                    _ => 1.0,
                };
                let flag = if s.get("flag").and_then(|v| v.as_bool()) == Some(true) {
                    0.0
                } else {
                    0.3
                };
                (xv - 0.5).powi(2) + (n - 3.0).powi(2) / 10.0 + c + flag
            }
            SyntheticKind::CrashProbe => {
                let tol = s.real("tol").expect("validated");
                if tol < 1e-4 {
                    return Err(format!("solver failed to converge with tol={tol:e}"));
                }
                (tol.log10() + 2.0).powi(2) + s.real("x").expect("validated").powi(2)
            }
        })
    }
}

impl std::str::FromStr for SyntheticKind {
    type Err = super::ProblemError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        [
            SyntheticKind::Sphere,
            SyntheticKind::Branin,
            SyntheticKind::Rosenbrock,
            SyntheticKind::Mixed,
            SyntheticKind::CrashProbe,
        ]
        .into_iter()
        .find(|k| k.as_str() == s)
        .ok_or_else(|| super::ProblemError::Config(format!("unknown synthetic function `{s}`")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::Value;

    #[test]
    fn branin_minimizers_hit_known_value() {
        use std::f64::consts::PI;
        for (a, b) in [(-PI, 12.275), (PI, 2.275), (9.42478, 2.475)] {
            let s = Suggestion::new()
                .with("x0", Value::Real(a))
                .with("x1", Value::Real(b));
            let v = SyntheticKind::Branin.eval(&s, 2).unwrap();
            assert!((v - BRANIN_MIN).abs() < 1e-5, "{v}");
        }
    }

    #[test]
    fn mixed_optimum_is_zero() {
        let s = Suggestion::new()
            .with("x", Value::Real(0.5))
            .with("n", Value::Int(3))
            .with("c", Value::Cat("b".into()))
            .with("flag", Value::Bool(true));
        assert_eq!(SyntheticKind::Mixed.eval(&s, 4).unwrap(), 0.0);
    }

    #[test]
    fn crash_probe_crashes_below_tolerance() {
        let s = Suggestion::new()
            .with("tol", Value::Real(1e-5))
            .with("x", Value::Real(0.0));
        assert!(SyntheticKind::CrashProbe.eval(&s, 2).is_err());
        let s = Suggestion::new()
            .with("tol", Value::Real(1e-2))
            .with("x", Value::Real(0.0));
        assert!(SyntheticKind::CrashProbe.eval(&s, 2).unwrap().abs() < 1e-24);
    }

    proptest::proptest! {
        #[test]
        fn known_optimum_bounds_every_point(seed in proptest::prelude::any::<u64>(), dim in 1usize..6) {
            use rand::SeedableRng;
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            for kind in [SyntheticKind::Sphere, SyntheticKind::Branin, SyntheticKind::Rosenbrock, SyntheticKind::Mixed] {
                let d = kind.dim(Some(dim));
                let space = kind.space(d);
                for _ in 0..20 {
                    let s = crate::optimizers::random::sample_uniform(&space, &mut rng);
                    let v = kind.eval(&s, d).unwrap();
                    proptest::prop_assert!(v >= kind.known_opt() - 1e-12, "{} {v}", kind.as_str());
                }
            }
        }
    }
}
