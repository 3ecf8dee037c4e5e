//! Benchmark objectives: `{models} x {datasets} x {metrics}` tuning tasks plus
//! synthetic functions with known optima.
//!
//! Every ML objective is noisy across trials in the same way re-splitting
//! data is: the trial seed picks the 80/20 train/validation split. Given
//! `(suggestion, trial_seed)` an evaluation is fully deterministic.

pub mod datasets;
pub mod metrics;
pub mod models;
pub mod synthetic;

use std::collections::HashSet;
use std::fmt;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use datasets::{generate_dataset, Dataset, DatasetKind, Task};
pub use metrics::Metric;
pub use models::ModelKind;
pub use synthetic::SyntheticKind;

use crate::seed::SeedKey;
use crate::space::{SearchSpace, SpaceError, Suggestion};
use models::{Table, Target};

pub const DEFAULT_ROWS: usize = 150;
const TRAIN_FRACTION: f64 = 0.8;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProblemError {
    #[error("suite config: {0}")]
    Config(String),
}

/// Failure of a single objective evaluation.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    /// The suggestion is not a member of the problem's space.
    #[error(transparent)]
    Invalid(#[from] SpaceError),
    /// The objective itself failed; scored as `+inf`.
    #[error("objective crashed: {0}")]
    Crash(String),
}

pub type CustomObjective = dyn Fn(&Suggestion, u64) -> Result<f64, String> + Send + Sync;

#[derive(Clone)]
enum Objective {
    Ml {
        model: ModelKind,
        dataset: Arc<Dataset>,
        metric: Metric,
    },
    Synthetic {
        kind: SyntheticKind,
        dim: usize,
    },
    Custom(Arc<CustomObjective>),
}

#[derive(Clone)]
pub struct Problem {
    id: String,
    space: SearchSpace,
    objective: Objective,
    known_opt: Option<f64>,
}

impl fmt::Debug for Problem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Problem")
            .field("id", &self.id)
            .field("known_opt", &self.known_opt)
            .finish_non_exhaustive()
    }
}

impl Problem {
    pub fn ml(
        model: ModelKind,
        dataset: Arc<Dataset>,
        metric: Metric,
    ) -> Result<Self, ProblemError> {
        if metric.task() != dataset.task() {
            return Err(ProblemError::Config(format!(
                "metric `{metric}` does not apply to {:?} dataset `{}`",
                dataset.task(),
                dataset.kind
            )));
        }
        let rows = if dataset.n_rows() == DEFAULT_ROWS {
            String::new()
        } else {
            format!("x{}", dataset.n_rows())
        };
        Ok(Self {
            id: format!("{model}-{}{}{rows}-{metric}", dataset.kind, dataset.seed),
            space: model.space(),
            objective: Objective::Ml {
                model,
                dataset,
                metric,
            },
            known_opt: None,
        })
    }

    pub fn synthetic(kind: SyntheticKind, dim: Option<usize>) -> Self {
        let dim = kind.dim(dim);
        let id = match kind {
            SyntheticKind::Sphere | SyntheticKind::Rosenbrock => {
                format!("{}-d{dim}", kind.as_str())
            }
            _ => kind.as_str().to_string(),
        };
        Self {
            id,
            space: kind.space(dim),
            objective: Objective::Synthetic { kind, dim },
            known_opt: Some(kind.known_opt()),
        }
    }

    /// Wraps an arbitrary closure `(suggestion, trial_seed) -> loss`; an `Err`
    /// is reported as a crash.
    pub fn custom<F>(
        id: impl Into<String>,
        space: SearchSpace,
        known_opt: Option<f64>,
        f: F,
    ) -> Self
    where
        F: Fn(&Suggestion, u64) -> Result<f64, String> + Send + Sync + 'static,
    {
        Self {
            id: id.into(),
            space,
            objective: Objective::Custom(Arc::new(f)),
            known_opt,
        }
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn space(&self) -> &SearchSpace {
        &self.space
    }

    pub fn known_opt(&self) -> Option<f64> {
        self.known_opt
    }

    pub fn evaluate(&self, s: &Suggestion, trial_seed: u64) -> Result<f64, EvalError> {
        self.space.validate(s)?;
        let loss = match &self.objective {
            Objective::Ml {
                model,
                dataset,
                metric,
            } => {
                let (train, test) = split(dataset, trial_seed);
                let target = Target {
                    task: dataset.task(),
                    n_classes: dataset.n_classes(),
                };
                let seed = SeedKey::new(trial_seed).str("model").finish();
                let pred = model
                    .fit_predict(s, &train, &test, target, seed)
                    .map_err(|e| EvalError::Crash(format!("{model} fit failed: {e:?}")))?;
                metric.loss(&pred, &test.y).ok_or_else(|| {
                    EvalError::Crash("prediction type does not match metric".into())
                })?
            }
            Objective::Synthetic { kind, dim } => kind.eval(s, *dim).map_err(EvalError::Crash)?,
            Objective::Custom(f) => f(s, trial_seed).map_err(EvalError::Crash)?,
        };
        if loss.is_finite() {
            Ok(loss)
        } else {
            Err(EvalError::Crash(format!("non-finite loss {loss}")))
        }
    }
}

fn split(dataset: &Dataset, trial_seed: u64) -> (Table, Table) {
    let mut rows: Vec<usize> = (0..dataset.n_rows()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(
        SeedKey::new(dataset.seed)
            .str("split")
            .int(trial_seed)
            .finish(),
    );
    rows.shuffle(&mut rng);
    let n_train = (dataset.n_rows() as f64 * TRAIN_FRACTION).round() as usize;
    let table = |idx: &[usize]| Table {
        x: idx
            .iter()
            .flat_map(|&i| dataset.row(i).iter().copied())
            .collect(),
        y: idx.iter().map(|&i| dataset.targets()[i]).collect(),
        n_cols: dataset.n_cols(),
    };
    (table(&rows[..n_train]), table(&rows[n_train..]))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitLabel {
    #[default]
    Practice,
    Feedback,
    Final,
}

#[derive(Debug, Clone)]
pub struct ProblemSuite {
    problems: Vec<Problem>,
    split: SplitLabel,
}

impl ProblemSuite {
    pub fn new(problems: Vec<Problem>, split: SplitLabel) -> Result<Self, ProblemError> {
        if problems.is_empty() {
            return Err(ProblemError::Config("suite has no problems".into()));
        }
        let mut seen = HashSet::new();
        for p in &problems {
            if !seen.insert(p.id.as_str()) {
                return Err(ProblemError::Config(format!(
                    "duplicate problem id `{}`",
                    p.id
                )));
            }
        }
        Ok(Self { problems, split })
    }

    pub fn problems(&self) -> &[Problem] {
        &self.problems
    }

    pub fn split(&self) -> SplitLabel {
        self.split
    }

    pub fn len(&self) -> usize {
        self.problems.len()
    }

    pub fn is_empty(&self) -> bool {
        self.problems.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&Problem> {
        self.problems.iter().find(|p| p.id == id)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetRef {
    pub kind: DatasetKind,
    pub seed: u64,
    #[serde(default = "default_rows")]
    pub n_rows: usize,
}

fn default_rows() -> usize {
    DEFAULT_ROWS
}

impl DatasetRef {
    pub fn new(kind: DatasetKind, seed: u64) -> Self {
        Self {
            kind,
            seed,
            n_rows: DEFAULT_ROWS,
        }
    }
}

/// One problem per compatible `(model, dataset, metric)` triple; metrics
/// only pair with datasets of their task.
pub fn build_suite(
    models: &[ModelKind],
    datasets: &[DatasetRef],
    metrics: &[Metric],
    split: SplitLabel,
) -> Result<ProblemSuite, ProblemError> {
    if models.is_empty() || datasets.is_empty() || metrics.is_empty() {
        return Err(ProblemError::Config(
            "models, datasets and metrics must all be nonempty".into(),
        ));
    }
    let generated: Vec<Arc<Dataset>> = datasets
        .iter()
        .map(|d| generate_dataset(d.kind, d.seed, d.n_rows).map(Arc::new))
        .collect::<Result<_, _>>()?;
    for d in &generated {
        if !metrics.iter().any(|m| m.task() == d.task()) {
            return Err(ProblemError::Config(format!(
                "no listed metric applies to {:?} dataset `{}{}`",
                d.task(),
                d.kind,
                d.seed
            )));
        }
    }
    let mut problems = Vec::new();
    for &model in models {
        for d in &generated {
            for &metric in metrics {
                if metric.task() == d.task() && model.supports(d.task()) {
                    problems.push(Problem::ml(model, Arc::clone(d), metric)?);
                }
            }
        }
    }
    ProblemSuite::new(problems, split)
}

/// Suite manifest: either an explicit list of problems or a product spec.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SuiteManifest {
    Explicit(Vec<ManifestEntry>),
    Product(ProductManifest),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ManifestEntry {
    Ml {
        model: ModelKind,
        dataset_kind: DatasetKind,
        dataset_seed: u64,
        metric: Metric,
        #[serde(default = "default_rows")]
        n_rows: usize,
    },
    Synthetic {
        synthetic: SyntheticKind,
        #[serde(default)]
        dim: Option<usize>,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProductManifest {
    #[serde(default)]
    pub split: SplitLabel,
    pub models: Vec<ModelKind>,
    pub datasets: Vec<DatasetRef>,
    pub metrics: Vec<Metric>,
    #[serde(default)]
    pub synthetic: Vec<SyntheticEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SyntheticEntry {
    pub function: SyntheticKind,
    #[serde(default)]
    pub dim: Option<usize>,
}

impl SuiteManifest {
    pub fn parse(text: &str) -> Result<Self, ProblemError> {
        serde_json::from_str(text).map_err(|e| ProblemError::Config(format!("suite manifest: {e}")))
    }

    pub fn build(&self) -> Result<ProblemSuite, ProblemError> {
        match self {
            SuiteManifest::Explicit(entries) => {
                let mut problems = Vec::with_capacity(entries.len());
                for e in entries {
                    problems.push(match e {
                        ManifestEntry::Ml {
                            model,
                            dataset_kind,
                            dataset_seed,
                            metric,
                            n_rows,
                        } => {
                            let d = generate_dataset(*dataset_kind, *dataset_seed, *n_rows)?;
                            Problem::ml(*model, Arc::new(d), *metric)?
                        }
                        ManifestEntry::Synthetic { synthetic, dim } => {
                            Problem::synthetic(*synthetic, *dim)
                        }
                    });
                }
                ProblemSuite::new(problems, SplitLabel::Practice)
            }
            SuiteManifest::Product(p) => {
                let suite = build_suite(&p.models, &p.datasets, &p.metrics, p.split)?;
                let mut problems = suite.problems;
                problems.extend(
                    p.synthetic
                        .iter()
                        .map(|s| Problem::synthetic(s.function, s.dim)),
                );
                ProblemSuite::new(problems, p.split)
            }
        }
    }
}

/// The bundled desk-scale suite: 2 models x 3 datasets x 2 metrics each.
pub const REFERENCE_SUITE_JSON: &str = include_str!("reference_suite.json");

pub fn reference_suite() -> ProblemSuite {
    SuiteManifest::parse(REFERENCE_SUITE_JSON)
        .and_then(|m| m.build())
        .expect("bundled reference suite is valid")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::Value;

    fn regs() -> Vec<DatasetRef> {
        [1, 2, 3]
            .into_iter()
            .map(|s| DatasetRef::new(DatasetKind::Linear, s))
            .collect()
    }

    #[test]
    fn full_product_for_compatible_lists() {
        let suite = build_suite(
            &[ModelKind::Ridge, ModelKind::Knn],
            &regs(),
            &[Metric::Mse, Metric::Mae],
            SplitLabel::Practice,
        )
        .unwrap();
        assert_eq!(suite.len(), 12);
    }

    #[test]
    fn feedback_phase_shape_gives_sixty_problems() {
        let datasets = vec![
            DatasetRef::new(DatasetKind::Linear, 1),
            DatasetRef::new(DatasetKind::Friedman, 2),
            DatasetRef::new(DatasetKind::Blobs, 3),
            DatasetRef::new(DatasetKind::Moons, 4),
            DatasetRef::new(DatasetKind::Friedman, 5),
        ];
        let suite = build_suite(
            &ModelKind::ALL[..6],
            &datasets,
            &Metric::ALL,
            SplitLabel::Feedback,
        )
        .unwrap();
        assert_eq!(suite.len(), 60);
    }

    #[test]
    fn incompatible_metric_is_config_error() {
        let err = build_suite(
            &[ModelKind::Knn],
            &[DatasetRef::new(DatasetKind::Blobs, 1)],
            &[Metric::Mse],
            SplitLabel::Practice,
        );
        assert!(matches!(err, Err(ProblemError::Config(_))));
        assert!(build_suite(&[], &regs(), &[Metric::Mse], SplitLabel::Practice).is_err());
    }

    #[test]
    fn suite_order_is_stable() {
        let a = build_suite(
            &[ModelKind::Knn, ModelKind::Ridge],
            &regs(),
            &[Metric::Mse],
            SplitLabel::Practice,
        )
        .unwrap();
        let b = build_suite(
            &[ModelKind::Knn, ModelKind::Ridge],
            &regs(),
            &[Metric::Mse],
            SplitLabel::Practice,
        )
        .unwrap();
        let ids = |s: &ProblemSuite| {
            s.problems()
                .iter()
                .map(|p| p.id().to_string())
                .collect::<Vec<_>>()
        };
        assert_eq!(ids(&a), ids(&b));
        assert_eq!(ids(&a)[0], "knn-linear1-mse");
    }

    #[test]
    fn sphere_center_is_zero() {
        let p = Problem::synthetic(SyntheticKind::Sphere, Some(3));
        let s = (0..3)
            .map(|i| (format!("x{i}"), Value::Real(0.0)))
            .collect();
        assert_eq!(p.evaluate(&s, 0).unwrap(), 0.0);
        assert_eq!(p.known_opt(), Some(0.0));
    }

    #[test]
    fn crash_probe_reports_crash_and_invalid_is_distinct() {
        let p = Problem::synthetic(SyntheticKind::CrashProbe, None);
        let s = Suggestion::new()
            .with("tol", Value::Real(1e-5))
            .with("x", Value::Real(0.0));
        assert!(matches!(p.evaluate(&s, 0), Err(EvalError::Crash(_))));
        let bad = Suggestion::new()
            .with("tol", Value::Real(5.0))
            .with("x", Value::Real(0.0));
        assert!(matches!(p.evaluate(&bad, 0), Err(EvalError::Invalid(_))));
    }

    fn ridge_problem() -> Problem {
        let d = generate_dataset(DatasetKind::Linear, 11, 200).unwrap();
        Problem::ml(ModelKind::Ridge, Arc::new(d), Metric::Mse).unwrap()
    }

    fn ridge_at(alpha: f64) -> Suggestion {
        Suggestion::new()
            .with("alpha", Value::Real(alpha))
            .with("fit_intercept", Value::Bool(true))
    }

    #[test]
    fn ridge_max_alpha_is_worse_than_grid_best() {
        let p = ridge_problem();
        // grid-sweep oracle over 100 log-spaced alphas
        let best = (0..100)
            .map(|i| 10f64.powf(-4.0 + 8.0 * i as f64 / 99.0))
            .map(|a| p.evaluate(&ridge_at(a), 0).unwrap())
            .fold(f64::INFINITY, f64::min);
        let at_max = p.evaluate(&ridge_at(1e4), 0).unwrap();
        assert!(at_max > best, "{at_max} vs {best}");
    }

    #[test]
    fn ml_evaluation_is_deterministic_and_seed_sensitive() {
        let p = ridge_problem();
        let s = ridge_at(1.0);
        assert_eq!(p.evaluate(&s, 3).unwrap(), p.evaluate(&s, 3).unwrap());
        assert_ne!(p.evaluate(&s, 3).unwrap(), p.evaluate(&s, 4).unwrap());
    }

    #[test]
    fn manifest_forms_parse() {
        let explicit = r#"[
            {"model": "knn", "dataset_kind": "blobs", "dataset_seed": 7, "metric": "error"},
            {"synthetic": "sphere", "dim": 2}
        ]"#;
        let suite = SuiteManifest::parse(explicit).unwrap().build().unwrap();
        assert_eq!(suite.len(), 2);
        assert_eq!(suite.problems()[1].id(), "sphere-d2");

        let product = r#"{"split": "final", "models": ["glm"], "datasets": [{"kind": "moons", "seed": 1}],
                          "metrics": ["nll", "error"], "synthetic": [{"function": "branin"}]}"#;
        let suite = SuiteManifest::parse(product).unwrap().build().unwrap();
        assert_eq!(suite.len(), 3);
        assert_eq!(suite.split(), SplitLabel::Final);
        assert!(SuiteManifest::parse(r#"{"models": ["svm"]}"#).is_err());
    }

    #[test]
    fn reference_suite_has_twelve_problems() {
        assert_eq!(reference_suite().len(), 12);
    }
}
