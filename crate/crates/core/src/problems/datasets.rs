//! Deterministic embedded datasets standing in for public benchmark data.

use std::fmt;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::ProblemError;

pub const MIN_ROWS: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Regression,
    Classification,
}

/// Generator family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetKind {
    /// Sparse linear signal plus Gaussian noise, with nuisance features.
    Linear,
    /// Friedman #1 nonlinear response over 10 features (5 informative).
    Friedman,
    /// Overlapping Gaussian blobs, 3 classes.
    Blobs,
    /// Two interleaved noisy half-moons, 2 classes.
    Moons,
}

impl DatasetKind {
    pub fn task(self) -> Task {
        match self {
            DatasetKind::Linear | DatasetKind::Friedman => Task::Regression,
            DatasetKind::Blobs | DatasetKind::Moons => Task::Classification,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            DatasetKind::Linear => "linear",
            DatasetKind::Friedman => "friedman",
            DatasetKind::Blobs => "blobs",
            DatasetKind::Moons => "moons",
        }
    }
}

impl fmt::Display for DatasetKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for DatasetKind {
    type Err = ProblemError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "linear" => Ok(DatasetKind::Linear),
            "friedman" => Ok(DatasetKind::Friedman),
            "blobs" => Ok(DatasetKind::Blobs),
            "moons" => Ok(DatasetKind::Moons),
            other => Err(ProblemError::Config(format!(
                "unknown dataset kind `{other}`"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub kind: DatasetKind,
    pub seed: u64,
    /// Row-major features, `n_rows * n_cols`.
    features: Vec<f64>,
    n_cols: usize,
    targets: Vec<f64>,
    n_classes: usize,
}

impl Dataset {
    pub fn task(&self) -> Task {
        self.kind.task()
    }

    pub fn n_rows(&self) -> usize {
        self.targets.len()
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    /// Zero for regression.
    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.n_cols..(i + 1) * self.n_cols]
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.n_rows()).map(|i| self.row(i)[j]).collect()
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let header: Vec<String> = (0..self.n_cols)
            .map(|j| format!("x{j}"))
            .chain(["y".to_string()])
            .collect();
        writeln!(w, "{}", header.join(","))?;
        for i in 0..self.n_rows() {
            let row: Vec<String> = self.row(i).iter().map(|x| format!("{x}")).collect();
            writeln!(w, "{},{}", row.join(","), self.targets[i])?;
        }
        Ok(())
    }
}

/// Generates a dataset. Same `(kind, seed, n_rows)` always yields the same data.
pub fn generate_dataset(
    kind: DatasetKind,
    seed: u64,
    n_rows: usize,
) -> Result<Dataset, ProblemError> {
    if n_rows < MIN_ROWS {
        return Err(ProblemError::Config(format!(
            "datasets need at least {MIN_ROWS} rows, got {n_rows}"
        )));
    }
    let mut rng =
        ChaCha8Rng::seed_from_u64(seed ^ (kind as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    let (features, n_cols, targets, n_classes) = match kind {
        DatasetKind::Linear => linear(&mut rng, n_rows),
        DatasetKind::Friedman => friedman(&mut rng, n_rows),
        DatasetKind::Blobs => blobs(&mut rng, n_rows),
        DatasetKind::Moons => moons(&mut rng, n_rows),
    };
    Ok(Dataset {
        kind,
        seed,
        features,
        n_cols,
        targets,
        n_classes,
    })
}

type Generated = (Vec<f64>, usize, Vec<f64>, usize);

fn linear(rng: &mut ChaCha8Rng, n: usize) -> Generated {
    const COLS: usize = 8;
    const INFORMATIVE: usize = 4;
    let coef: Vec<f64> = (0..INFORMATIVE)
        .map(|_| rng.gen_range(1.0..3.0) * sign(rng))
        .collect();
    let mut x = Vec::with_capacity(n * COLS);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let row: Vec<f64> = (0..COLS).map(|_| standard_normal(rng)).collect();
        let signal: f64 = row[..INFORMATIVE]
            .iter()
            .zip(&coef)
            .map(|(a, b)| a * b)
            .sum();
        y.push(signal + 1.5 * standard_normal(rng));
        x.extend(row);
    }
    (x, COLS, y, 0)
}

fn friedman(rng: &mut ChaCha8Rng, n: usize) -> Generated {
    const COLS: usize = 10;
    let mut x = Vec::with_capacity(n * COLS);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let r: Vec<f64> = (0..COLS).map(|_| rng.gen::<f64>()).collect();
        let f = 10.0 * (std::f64::consts::PI * r[0] * r[1]).sin()
            + 20.0 * (r[2] - 0.5).powi(2)
            + 10.0 * r[3]
            + 5.0 * r[4];
        y.push(f + standard_normal(rng));
        x.extend(r);
    }
    (x, COLS, y, 0)
}

fn blobs(rng: &mut ChaCha8Rng, n: usize) -> Generated {
    const COLS: usize = 6;
    const CLASSES: usize = 3;
    let centers: Vec<Vec<f64>> = (0..CLASSES)
        .map(|_| (0..COLS).map(|_| rng.gen_range(-2.0..2.0)).collect())
        .collect();
    let mut x = Vec::with_capacity(n * COLS);
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        let c = i % CLASSES;
        x.extend(centers[c].iter().map(|m| m + 1.6 * standard_normal(rng)));
        y.push(c as f64);
    }
    (x, COLS, y, CLASSES)
}

fn moons(rng: &mut ChaCha8Rng, n: usize) -> Generated {
    const COLS: usize = 4;
    let mut x = Vec::with_capacity(n * COLS);
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        let c = i % 2;
        let t = std::f64::consts::PI * rng.gen::<f64>();
        let (a, b) = if c == 0 {
            (t.cos(), t.sin())
        } else {
            (1.0 - t.cos(), 0.5 - t.sin())
        };
        x.push(a + 0.25 * standard_normal(rng));
        x.push(b + 0.25 * standard_normal(rng));
        // two nuisance features
        x.push(standard_normal(rng));
        x.push(standard_normal(rng));
        y.push(c as f64);
    }
    (x, COLS, y, 2)
}

fn sign(rng: &mut ChaCha8Rng) -> f64 {
    if rng.gen::<bool>() {
        1.0
    } else {
        -1.0
    }
}

fn standard_normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}
