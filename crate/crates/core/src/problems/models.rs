//! Small natively implemented learners used as tuning targets.
//!
//! Each model exposes a fixed mixed-type search space and a deterministic
//! `fit_predict` over a train/validation split. Features are standardized
//! with training statistics before fitting.

use std::fmt;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::datasets::Task;
use super::ProblemError;
use crate::space::{ParamSpec, SearchSpace, Suggestion, Warp};

/// Model outputs on the validation rows.
#[derive(Debug, Clone, PartialEq)]
pub enum Prediction {
    Values(Vec<f64>),
    /// Row-major class probabilities, `n_rows * n_classes`.
    Proba {
        n_classes: usize,
        probs: Vec<f64>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub enum FitFailure {
    Diverged,
    Singular,
}

/// Row-major feature block with targets.
#[derive(Debug, Clone)]
pub struct Table {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub n_cols: usize,
}

impl Table {
    pub fn n_rows(&self) -> usize {
        self.y.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.n_cols..(i + 1) * self.n_cols]
    }

    fn matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.n_rows(), self.n_cols, &self.x)
    }
}

/// Task description handed to every learner.
#[derive(Debug, Clone, Copy)]
pub struct Target {
    pub task: Task,
    pub n_classes: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    Ridge,
    Knn,
    /// Generalized linear model trained by fixed-iteration gradient descent
    /// (least squares for regression, multinomial logistic for classification).
    Glm,
    Tree,
    Forest,
    KernelRidge,
    /// Least-squares gradient boosting of shallow trees.
    Boost,
}

impl ModelKind {
    pub const ALL: [ModelKind; 7] = [
        ModelKind::Ridge,
        ModelKind::Knn,
        ModelKind::Glm,
        ModelKind::Tree,
        ModelKind::Forest,
        ModelKind::KernelRidge,
        ModelKind::Boost,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Ridge => "ridge",
            ModelKind::Knn => "knn",
            ModelKind::Glm => "glm",
            ModelKind::Tree => "tree",
            ModelKind::Forest => "forest",
            ModelKind::KernelRidge => "kernel-ridge",
            ModelKind::Boost => "boost",
        }
    }

    pub fn supports(self, _task: Task) -> bool {
        true
    }

    pub fn space(self) -> SearchSpace {
        let p = match self {
            ModelKind::Ridge => vec![
                ParamSpec::real("alpha", 1e-4, 1e4, Warp::Log),
                ParamSpec::boolean("fit_intercept"),
            ],
            ModelKind::Knn => vec![
                ParamSpec::int("n_neighbors", 1, 40, Warp::Log),
                ParamSpec::cat("weights", ["uniform", "distance"]),
                ParamSpec::real("p", 1.0, 4.0, Warp::Linear),
            ],
            ModelKind::Glm => vec![
                ParamSpec::real("lr", 1e-4, 10.0, Warp::Log),
                ParamSpec::real("l2", 1e-6, 10.0, Warp::Log),
                ParamSpec::int("n_iter", 4, 256, Warp::Log),
                ParamSpec::real("momentum", 0.0, 0.95, Warp::Linear),
            ],
            ModelKind::Tree => vec![
                ParamSpec::int("max_depth", 1, 12, Warp::Linear),
                ParamSpec::int("min_samples_split", 2, 32, Warp::Log),
                ParamSpec::int("min_samples_leaf", 1, 16, Warp::Log),
                ParamSpec::real("max_features", 0.1, 1.0, Warp::Linear),
            ],
            ModelKind::Forest => vec![
                ParamSpec::int("n_estimators", 1, 32, Warp::Log),
                ParamSpec::int("max_depth", 1, 12, Warp::Linear),
                ParamSpec::real("max_features", 0.1, 1.0, Warp::Linear),
                ParamSpec::boolean("bootstrap"),
            ],
            ModelKind::KernelRidge => vec![
                ParamSpec::real("alpha", 1e-5, 10.0, Warp::Log),
                ParamSpec::real("gamma", 1e-3, 10.0, Warp::Log),
                ParamSpec::cat("kernel", ["rbf", "laplacian"]),
            ],
            ModelKind::Boost => vec![
                ParamSpec::real("learning_rate", 1e-3, 1.0, Warp::Log),
                ParamSpec::int("n_estimators", 1, 64, Warp::Log),
                ParamSpec::int("max_depth", 1, 6, Warp::Linear),
                ParamSpec::real("subsample", 0.3, 1.0, Warp::Linear),
                ParamSpec::int("min_samples_leaf", 1, 32, Warp::Log),
            ],
        };
        SearchSpace::new(
            p.into_iter()
                .collect::<Result<_, _>>()
                .expect("static spec"),
        )
        .expect("static space")
    }

    /// Fits on `train` and predicts `test`. `seed` drives any internal
    /// randomness (feature subsampling, bootstrap draws).
    pub fn fit_predict(
        self,
        params: &Suggestion,
        train: &Table,
        test: &Table,
        target: Target,
        seed: u64,
    ) -> Result<Prediction, FitFailure> {
        let (train, test) = standardize(train, test);
        let get = |name: &str| params.real(name).expect("validated suggestion");
        match self {
            ModelKind::Ridge => ridge(
                &train,
                &test,
                target,
                get("alpha"),
                params
                    .get("fit_intercept")
                    .and_then(|v| v.as_bool())
                    .unwrap_or(true),
            ),
            ModelKind::Knn => {
                let distance = params.get("weights").and_then(|v| v.as_str()) == Some("distance");
                Ok(knn(
                    &train,
                    &test,
                    target,
                    get("n_neighbors") as usize,
                    distance,
                    get("p"),
                ))
            }
            ModelKind::Glm => glm(
                &train,
                &test,
                target,
                get("lr"),
                get("l2"),
                get("n_iter") as usize,
                get("momentum"),
            ),
            ModelKind::Tree => {
                let cfg = TreeConfig {
                    max_depth: get("max_depth") as usize,
                    min_samples_split: get("min_samples_split") as usize,
                    min_samples_leaf: get("min_samples_leaf") as usize,
                    max_features: get("max_features"),
                };
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let rows: Vec<usize> = (0..train.n_rows()).collect();
                let tree = Tree::fit(&train, &rows, target, &cfg, &mut rng);
                Ok(tree.predict_table(&test, target))
            }
            ModelKind::Forest => {
                let cfg = TreeConfig {
                    max_depth: get("max_depth") as usize,
                    min_samples_split: 2,
                    min_samples_leaf: 1,
                    max_features: get("max_features"),
                };
                let bootstrap = params
                    .get("bootstrap")
                    .and_then(|v| v.as_bool())
                    .unwrap_or(true);
                Ok(forest(
                    &train,
                    &test,
                    target,
                    get("n_estimators") as usize,
                    bootstrap,
                    &cfg,
                    seed,
                ))
            }
            ModelKind::KernelRidge => {
                let laplacian = params.get("kernel").and_then(|v| v.as_str()) == Some("laplacian");
                kernel_ridge(&train, &test, target, get("alpha"), get("gamma"), laplacian)
            }
            ModelKind::Boost => {
                let cfg = TreeConfig {
                    max_depth: get("max_depth") as usize,
                    min_samples_split: 2,
                    min_samples_leaf: get("min_samples_leaf") as usize,
                    max_features: 1.0,
                };
                let rounds = get("n_estimators") as usize;
                Ok(boost(
                    &train,
                    &test,
                    target,
                    rounds,
                    get("learning_rate"),
                    get("subsample"),
                    &cfg,
                    seed,
                ))
            }
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for ModelKind {
    type Err = ProblemError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ModelKind::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| ProblemError::Config(format!("unknown model `{s}`")))
    }
}

fn standardize(train: &Table, test: &Table) -> (Table, Table) {
    let d = train.n_cols;
    let n = train.n_rows() as f64;
    let mut mean = vec![0.0; d];
    let mut sd = vec![0.0; d];
    for i in 0..train.n_rows() {
        for (j, x) in train.row(i).iter().enumerate() {
            mean[j] += x / n;
        }
    }
    for i in 0..train.n_rows() {
        for (j, x) in train.row(i).iter().enumerate() {
            sd[j] += (x - mean[j]).powi(2) / n;
        }
    }
    let sd: Vec<f64> = sd
        .into_iter()
        .map(|v| if v > 1e-24 { v.sqrt() } else { 1.0 })
        .collect();
    let apply = |t: &Table| Table {
        x: t.x
            .iter()
            .enumerate()
            .map(|(k, x)| (x - mean[k % d]) / sd[k % d])
            .collect(),
        y: t.y.clone(),
        n_cols: d,
    };
    (apply(train), apply(test))
}

fn one_hot(y: &[f64], n_classes: usize) -> DMatrix<f64> {
    DMatrix::from_fn(y.len(), n_classes, |i, c| {
        if y[i] as usize == c {
            1.0
        } else {
            0.0
        }
    })
}

/// Turns unnormalized class scores into probabilities by clipping at a small
/// floor and renormalizing.
fn scores_to_proba(scores: &DMatrix<f64>) -> Prediction {
    let n_classes = scores.ncols();
    let mut probs = Vec::with_capacity(scores.len());
    for i in 0..scores.nrows() {
        let row: Vec<f64> = (0..n_classes)
            .map(|c| scores[(i, c)].clamp(1e-3, 1.0))
            .collect();
        let total: f64 = row.iter().sum();
        probs.extend(row.iter().map(|p| p / total));
    }
    Prediction::Proba { n_classes, probs }
}

fn solve_spd(mut a: DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>, FitFailure> {
    let scale = a
        .diagonal()
        .iter()
        .fold(0.0f64, |m, x| m.max(x.abs()))
        .max(1.0);
    let mut jitter = 0.0;
    for _ in 0..4 {
        if let Some(chol) = a.clone().cholesky() {
            return Ok(chol.solve(b));
        }
        jitter = if jitter == 0.0 {
            1e-10 * scale
        } else {
            jitter * 100.0
        };
        for i in 0..a.nrows() {
            a[(i, i)] += jitter;
        }
    }
    Err(FitFailure::Singular)
}

fn ridge(
    train: &Table,
    test: &Table,
    target: Target,
    alpha: f64,
    intercept: bool,
) -> Result<Prediction, FitFailure> {
    let x = train.matrix();
    let xt = test.matrix();
    let y = match target.task {
        Task::Regression => DMatrix::from_column_slice(train.n_rows(), 1, &train.y),
        Task::Classification => one_hot(&train.y, target.n_classes),
    };
    let offset = if intercept {
        y.row_mean()
    } else {
        nalgebra::RowDVector::zeros(y.ncols())
    };
    let yc = DMatrix::from_fn(y.nrows(), y.ncols(), |i, j| y[(i, j)] - offset[(0, j)]);
    let mut gram = x.transpose() * &x;
    for i in 0..gram.nrows() {
        gram[(i, i)] += alpha;
    }
    let w = solve_spd(gram, &(x.transpose() * yc))?;
    let mut pred = xt * w;
    for mut row in pred.row_iter_mut() {
        row += &offset;
    }
    Ok(match target.task {
        Task::Regression => Prediction::Values(pred.column(0).iter().copied().collect()),
        Task::Classification => scores_to_proba(&pred),
    })
}

fn minkowski(a: &[f64], b: &[f64], p: f64) -> f64 {
    if p == 1.0 {
        return a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum();
    }
    if p == 2.0 {
        return a
            .iter()
            .zip(b)
            .map(|(x, y)| (x - y).powi(2))
            .sum::<f64>()
            .sqrt();
    }
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs().powf(p))
        .sum::<f64>()
        .powf(1.0 / p)
}

fn knn(
    train: &Table,
    test: &Table,
    target: Target,
    k: usize,
    distance_weighted: bool,
    p: f64,
) -> Prediction {
    let k = k.clamp(1, train.n_rows());
    let mut values = Vec::new();
    let mut probs = Vec::new();
    let mut dists: Vec<(f64, usize)> = Vec::with_capacity(train.n_rows());
    for i in 0..test.n_rows() {
        dists.clear();
        dists.extend((0..train.n_rows()).map(|j| (minkowski(test.row(i), train.row(j), p), j)));
        dists.select_nth_unstable_by(k - 1, |a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let neigh = &dists[..k];
        let exact = neigh.iter().any(|(d, _)| *d == 0.0);
        let weight = |d: f64| match (distance_weighted, exact) {
            (false, _) => 1.0,
            (true, true) => {
                if d == 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            (true, false) => 1.0 / d,
        };
        let total: f64 = neigh.iter().map(|(d, _)| weight(*d)).sum();
        match target.task {
            Task::Regression => {
                values.push(
                    neigh
                        .iter()
                        .map(|(d, j)| weight(*d) * train.y[*j])
                        .sum::<f64>()
                        / total,
                );
            }
            Task::Classification => {
                let mut row = vec![0.0; target.n_classes];
                for (d, j) in neigh {
                    row[train.y[*j] as usize] += weight(*d) / total;
                }
                probs.extend(row);
            }
        }
    }
    match target.task {
        Task::Regression => Prediction::Values(values),
        Task::Classification => Prediction::Proba {
            n_classes: target.n_classes,
            probs,
        },
    }
}

fn softmax_rows(z: &mut DMatrix<f64>) {
    for mut row in z.row_iter_mut() {
        let m = row.max();
        row.apply(|v| *v = (*v - m).exp());
        let s = row.sum();
        row /= s;
    }
}

#[allow(clippy::too_many_arguments)]
fn glm(
    train: &Table,
    test: &Table,
    target: Target,
    lr: f64,
    l2: f64,
    n_iter: usize,
    momentum: f64,
) -> Result<Prediction, FitFailure> {
    let n = train.n_rows() as f64;
    // bias column appended
    let design = |t: &Table| {
        DMatrix::from_fn(t.n_rows(), t.n_cols + 1, |i, j| {
            if j == t.n_cols {
                1.0
            } else {
                t.row(i)[j]
            }
        })
    };
    let x = design(train);
    let xt = design(test);
    let outputs = match target.task {
        Task::Regression => 1,
        Task::Classification => target.n_classes,
    };
    let y = match target.task {
        Task::Regression => DMatrix::from_column_slice(train.n_rows(), 1, &train.y),
        Task::Classification => one_hot(&train.y, target.n_classes),
    };
    let mut w = DMatrix::<f64>::zeros(x.ncols(), outputs);
    let mut velocity = DMatrix::<f64>::zeros(x.ncols(), outputs);
    let bias_row = x.ncols() - 1;
    for _ in 0..n_iter {
        let mut out = &x * &w;
        if target.task == Task::Classification {
            softmax_rows(&mut out);
        }
        let resid = out - &y;
        let mut grad = x.transpose() * resid / n;
        for j in 0..bias_row {
            for c in 0..outputs {
                grad[(j, c)] += l2 * w[(j, c)];
            }
        }
        velocity = velocity * momentum - grad * lr;
        w += &velocity;
        if !w.iter().all(|v| v.is_finite() && v.abs() < 1e8) {
            return Err(FitFailure::Diverged);
        }
    }
    let mut out = xt * w;
    Ok(match target.task {
        Task::Regression => Prediction::Values(out.column(0).iter().copied().collect()),
        Task::Classification => {
            softmax_rows(&mut out);
            Prediction::Proba {
                n_classes: outputs,
                probs: out.transpose().iter().copied().collect(),
            }
        }
    })
}

fn kernel_ridge(
    train: &Table,
    test: &Table,
    target: Target,
    alpha: f64,
    gamma: f64,
    laplacian: bool,
) -> Result<Prediction, FitFailure> {
    let kernel = |a: &[f64], b: &[f64]| {
        if laplacian {
            (-gamma * minkowski(a, b, 1.0)).exp()
        } else {
            (-gamma * a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>()).exp()
        }
    };
    let n = train.n_rows();
    let mut k = DMatrix::from_fn(n, n, |i, j| kernel(train.row(i), train.row(j)));
    for i in 0..n {
        k[(i, i)] += alpha;
    }
    let y = match target.task {
        Task::Regression => DMatrix::from_column_slice(n, 1, &train.y),
        Task::Classification => one_hot(&train.y, target.n_classes),
    };
    let offset = y.row_mean();
    let yc = DMatrix::from_fn(y.nrows(), y.ncols(), |i, j| y[(i, j)] - offset[(0, j)]);
    let dual = solve_spd(k, &yc)?;
    let cross = DMatrix::from_fn(test.n_rows(), n, |i, j| kernel(test.row(i), train.row(j)));
    let mut pred = cross * dual;
    for mut row in pred.row_iter_mut() {
        row += &offset;
    }
    Ok(match target.task {
        Task::Regression => Prediction::Values(pred.column(0).iter().copied().collect()),
        Task::Classification => scores_to_proba(&pred),
    })
}

struct TreeConfig {
    max_depth: usize,
    min_samples_split: usize,
    min_samples_leaf: usize,
    max_features: f64,
}

enum Node {
    Leaf(Vec<f64>),
    Split {
        feature: usize,
        threshold: f64,
        left: Box<Node>,
        right: Box<Node>,
    },
}

struct Tree {
    root: Node,
}

impl Tree {
    fn fit(
        data: &Table,
        rows: &[usize],
        target: Target,
        cfg: &TreeConfig,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        Tree {
            root: grow(data, rows.to_vec(), target, cfg, 0, rng),
        }
    }

    fn predict_row(&self, x: &[f64]) -> &[f64] {
        let mut node = &self.root;
        loop {
            match node {
                Node::Leaf(v) => return v,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    node = if x[*feature] <= *threshold {
                        left
                    } else {
                        right
                    }
                }
            }
        }
    }

    fn predict_table(&self, test: &Table, target: Target) -> Prediction {
        let rows = (0..test.n_rows()).map(|i| self.predict_row(test.row(i)).to_vec());
        match target.task {
            Task::Regression => Prediction::Values(rows.map(|v| v[0]).collect()),
            Task::Classification => Prediction::Proba {
                n_classes: target.n_classes,
                probs: rows.flatten().collect(),
            },
        }
    }
}

fn leaf_value(data: &Table, rows: &[usize], target: Target) -> Vec<f64> {
    let n = rows.len() as f64;
    match target.task {
        Task::Regression => vec![rows.iter().map(|&i| data.y[i]).sum::<f64>() / n],
        Task::Classification => {
            let mut counts = vec![0.0; target.n_classes];
            for &i in rows {
                counts[data.y[i] as usize] += 1.0;
            }
            counts.iter().map(|c| c / n).collect()
        }
    }
}

/// Sum of squared deviations (regression) or Gini impurity scaled by count.
fn impurity(stats: &[f64], count: f64, target: Target) -> f64 {
    match target.task {
        Task::Regression => stats[1] - stats[0] * stats[0] / count,
        Task::Classification => count - stats.iter().map(|c| c * c).sum::<f64>() / count,
    }
}

fn accumulate(stats: &mut [f64], y: f64, sign: f64, target: Target) {
    match target.task {
        Task::Regression => {
            stats[0] += sign * y;
            stats[1] += sign * y * y;
        }
        Task::Classification => stats[y as usize] += sign,
    }
}

fn grow(
    data: &Table,
    rows: Vec<usize>,
    target: Target,
    cfg: &TreeConfig,
    depth: usize,
    rng: &mut ChaCha8Rng,
) -> Node {
    let n = rows.len();
    if depth >= cfg.max_depth || n < cfg.min_samples_split || n < 2 * cfg.min_samples_leaf {
        return Node::Leaf(leaf_value(data, &rows, target));
    }
    let width = match target.task {
        Task::Regression => 2,
        Task::Classification => target.n_classes,
    };
    let mut total = vec![0.0; width];
    for &i in &rows {
        accumulate(&mut total, data.y[i], 1.0, target);
    }
    let parent = impurity(&total, n as f64, target);
    if parent <= 1e-12 {
        return Node::Leaf(leaf_value(data, &rows, target));
    }

    let n_features =
        ((cfg.max_features * data.n_cols as f64).ceil() as usize).clamp(1, data.n_cols);
    let mut features: Vec<usize> = (0..data.n_cols).collect();
    features.shuffle(rng);
    features.truncate(n_features);

    let mut best: Option<(f64, usize, f64)> = None;
    let mut order = rows.clone();
    for &f in &features {
        order.sort_by(|&a, &b| data.row(a)[f].total_cmp(&data.row(b)[f]));
        let mut left = vec![0.0; width];
        let mut right = total.clone();
        for pos in 0..n - 1 {
            let i = order[pos];
            accumulate(&mut left, data.y[i], 1.0, target);
            accumulate(&mut right, data.y[i], -1.0, target);
            let (nl, nr) = (pos + 1, n - pos - 1);
            let (a, b) = (data.row(i)[f], data.row(order[pos + 1])[f]);
            if a == b || nl < cfg.min_samples_leaf || nr < cfg.min_samples_leaf {
                continue;
            }
            let cost = impurity(&left, nl as f64, target) + impurity(&right, nr as f64, target);
            if best.is_none_or(|(c, _, _)| cost < c - 1e-12) {
                best = Some((cost, f, 0.5 * (a + b)));
            }
        }
    }
    match best {
        Some((cost, feature, threshold)) if cost < parent - 1e-12 => {
            let (l, r): (Vec<usize>, Vec<usize>) = rows
                .iter()
                .partition(|&&i| data.row(i)[feature] <= threshold);
            Node::Split {
                feature,
                threshold,
                left: Box::new(grow(data, l, target, cfg, depth + 1, rng)),
                right: Box::new(grow(data, r, target, cfg, depth + 1, rng)),
            }
        }
        _ => Node::Leaf(leaf_value(data, &rows, target)),
    }
}

fn forest(
    train: &Table,
    test: &Table,
    target: Target,
    n_estimators: usize,
    bootstrap: bool,
    cfg: &TreeConfig,
    seed: u64,
) -> Prediction {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = train.n_rows();
    let width = match target.task {
        Task::Regression => 1,
        Task::Classification => target.n_classes,
    };
    let mut acc = vec![0.0; test.n_rows() * width];
    for _ in 0..n_estimators.max(1) {
        let rows: Vec<usize> = if bootstrap {
            (0..n).map(|_| rng.gen_range(0..n)).collect()
        } else {
            (0..n).collect()
        };
        let tree = Tree::fit(train, &rows, target, cfg, &mut rng);
        for i in 0..test.n_rows() {
            for (a, v) in acc[i * width..(i + 1) * width]
                .iter_mut()
                .zip(tree.predict_row(test.row(i)))
            {
                *a += v / n_estimators.max(1) as f64;
            }
        }
    }
    match target.task {
        Task::Regression => Prediction::Values(acc),
        Task::Classification => Prediction::Proba {
            n_classes: width,
            probs: acc,
        },
    }
}

/// Squared-loss boosting: each round fits one tree per output column to the
/// residuals of a row subsample. Classification boosts class indicators.
#[allow(clippy::too_many_arguments)]
fn boost(
    train: &Table,
    test: &Table,
    target: Target,
    rounds: usize,
    learning_rate: f64,
    subsample: f64,
    cfg: &TreeConfig,
    seed: u64,
) -> Prediction {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = train.n_rows();
    let width = match target.task {
        Task::Regression => 1,
        Task::Classification => target.n_classes,
    };
    let goal = |i: usize, c: usize| match target.task {
        Task::Regression => train.y[i],
        Task::Classification => f64::from(train.y[i] as usize == c),
    };
    let base: Vec<f64> = (0..width)
        .map(|c| (0..n).map(|i| goal(i, c)).sum::<f64>() / n as f64)
        .collect();
    let mut fit_train: Vec<f64> = (0..n * width).map(|k| base[k % width]).collect();
    let mut fit_test: Vec<f64> = (0..test.n_rows() * width)
        .map(|k| base[k % width])
        .collect();
    let mut resid = Table {
        x: train.x.clone(),
        y: vec![0.0; n],
        n_cols: train.n_cols,
    };
    let reg = Target {
        task: Task::Regression,
        n_classes: 0,
    };
    let keep = ((subsample * n as f64).ceil() as usize).clamp(1, n);
    let mut all: Vec<usize> = (0..n).collect();
    for _ in 0..rounds.max(1) {
        all.shuffle(&mut rng);
        let mut rows = all[..keep].to_vec();
        rows.sort_unstable();
        for c in 0..width {
            for i in 0..n {
                resid.y[i] = goal(i, c) - fit_train[i * width + c];
            }
            let tree = Tree::fit(&resid, &rows, reg, cfg, &mut rng);
            for i in 0..n {
                fit_train[i * width + c] += learning_rate * tree.predict_row(resid.row(i))[0];
            }
            for i in 0..test.n_rows() {
                fit_test[i * width + c] += learning_rate * tree.predict_row(test.row(i))[0];
            }
        }
    }
    match target.task {
        Task::Regression => Prediction::Values(fit_test),
        Task::Classification => {
            scores_to_proba(&DMatrix::from_row_slice(test.n_rows(), width, &fit_test))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::Value;

    fn line_table(n: usize, offset: f64) -> Table {
        let x: Vec<f64> = (0..n).map(|i| i as f64 / n as f64 + offset).collect();
        let y = x.iter().map(|v| 3.0 * v + 1.0).collect();
        Table { x, y, n_cols: 1 }
    }

    fn reg() -> Target {
        Target {
            task: Task::Regression,
            n_classes: 0,
        }
    }

    #[test]
    fn ridge_recovers_a_line_with_tiny_alpha() {
        let train = line_table(50, 0.0);
        let test = line_table(10, 0.013);
        let s = Suggestion::new()
            .with("alpha", Value::Real(1e-4))
            .with("fit_intercept", Value::Bool(true));
        let Prediction::Values(p) = ModelKind::Ridge
            .fit_predict(&s, &train, &test, reg(), 0)
            .unwrap()
        else {
            panic!()
        };
        for (a, b) in p.iter().zip(&test.y) {
            assert!((a - b).abs() < 1e-3, "{a} vs {b}");
        }
    }

    #[test]
    fn knn_with_one_neighbor_memorizes() {
        let train = line_table(30, 0.0);
        let s = Suggestion::new()
            .with("n_neighbors", Value::Int(1))
            .with("weights", Value::Cat("uniform".into()))
            .with("p", Value::Real(2.0));
        let Prediction::Values(p) = ModelKind::Knn
            .fit_predict(&s, &train, &train, reg(), 0)
            .unwrap()
        else {
            panic!()
        };
        assert_eq!(p, train.y);
    }

    #[test]
    fn glm_diverges_with_huge_step() {
        let train = line_table(40, 0.0);
        let s = Suggestion::new()
            .with("lr", Value::Real(10.0))
            .with("l2", Value::Real(1e-6))
            .with("n_iter", Value::Int(256))
            .with("momentum", Value::Real(0.9));
        assert_eq!(
            ModelKind::Glm.fit_predict(&s, &train, &train, reg(), 0),
            Err(FitFailure::Diverged)
        );
    }

    #[test]
    fn tree_splits_separable_classes() {
        let x: Vec<f64> = (0..40).map(|i| i as f64).collect();
        let y: Vec<f64> = (0..40).map(|i| if i < 20 { 0.0 } else { 1.0 }).collect();
        let t = Table { x, y, n_cols: 1 };
        let target = Target {
            task: Task::Classification,
            n_classes: 2,
        };
        let s = Suggestion::new()
            .with("max_depth", Value::Int(2))
            .with("min_samples_split", Value::Int(2))
            .with("min_samples_leaf", Value::Int(1))
            .with("max_features", Value::Real(1.0));
        let Prediction::Proba { probs, .. } =
            ModelKind::Tree.fit_predict(&s, &t, &t, target, 1).unwrap()
        else {
            panic!()
        };
        for i in 0..40 {
            let want = if i < 20 { 0 } else { 1 };
            assert_eq!(probs[2 * i + want], 1.0);
        }
    }

    #[test]
    fn boosting_rounds_shrink_training_error() {
        let train = line_table(60, 0.0);
        let mse = |rounds: i64| {
            let s = Suggestion::new()
                .with("learning_rate", Value::Real(0.3))
                .with("n_estimators", Value::Int(rounds))
                .with("max_depth", Value::Int(3))
                .with("subsample", Value::Real(1.0))
                .with("min_samples_leaf", Value::Int(1));
            let Prediction::Values(p) = ModelKind::Boost
                .fit_predict(&s, &train, &train, reg(), 0)
                .unwrap()
            else {
                panic!()
            };
            p.iter()
                .zip(&train.y)
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
                / 60.0
        };
        let (one, many) = (mse(1), mse(40));
        assert!(many < 0.05 * one, "{one} -> {many}");
    }

    #[test]
    fn every_model_space_is_mixed_or_numeric_and_nonempty() {
        for m in ModelKind::ALL {
            let s = m.space();
            assert!(s.len() >= 2, "{m}");
            assert_eq!(m.as_str().parse::<ModelKind>().unwrap(), m);
        }
    }
}
