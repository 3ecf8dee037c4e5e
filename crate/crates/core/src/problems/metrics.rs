use std::fmt;

use serde::{Deserialize, Serialize};

use super::datasets::Task;
use super::models::Prediction;
use super::ProblemError;

const PROBA_CLIP: f64 = 1e-15;

/// Validation losses. Accuracy is exposed as error rate so every metric is
/// minimized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Mse,
    Mae,
    Nll,
    Error,
}

impl Metric {
    pub const ALL: [Metric; 4] = [Metric::Mse, Metric::Mae, Metric::Nll, Metric::Error];

    pub fn task(self) -> Task {
        match self {
            Metric::Mse | Metric::Mae => Task::Regression,
            Metric::Nll | Metric::Error => Task::Classification,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Metric::Mse => "mse",
            Metric::Mae => "mae",
            Metric::Nll => "nll",
            Metric::Error => "error",
        }
    }

    /// Returns `None` when the prediction type does not match the metric.
    pub fn loss(self, pred: &Prediction, truth: &[f64]) -> Option<f64> {
        let n = truth.len() as f64;
        match (self, pred) {
            (Metric::Mse, Prediction::Values(p)) => Some(
                p.iter()
                    .zip(truth)
                    .map(|(a, b)| (a - b).powi(2))
                    .sum::<f64>()
                    / n,
            ),
            (Metric::Mae, Prediction::Values(p)) => {
                Some(p.iter().zip(truth).map(|(a, b)| (a - b).abs()).sum::<f64>() / n)
            }
            (Metric::Nll, Prediction::Proba { n_classes, probs }) => Some(
                truth
                    .iter()
                    .enumerate()
                    .map(|(i, &y)| {
                        -probs[i * n_classes + y as usize]
                            .clamp(PROBA_CLIP, 1.0 - PROBA_CLIP)
                            .ln()
                    })
                    .sum::<f64>()
                    / n,
            ),
            (Metric::Error, Prediction::Proba { n_classes, probs }) => {
                let wrong = truth
                    .iter()
                    .enumerate()
                    .filter(|(i, &y)| {
                        let row = &probs[i * n_classes..(i + 1) * n_classes];
                        let mut best = 0;
                        for (c, &p) in row.iter().enumerate() {
                            if p > row[best] {
                                best = c;
                            }
                        }
                        best != y as usize
                    })
                    .count();
                Some(wrong as f64 / n)
            }
            _ => None,
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Metric {
    type Err = ProblemError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Metric::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| ProblemError::Config(format!("unknown metric `{s}`")))
    }
}
