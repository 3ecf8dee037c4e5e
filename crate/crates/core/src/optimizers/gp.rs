//! Gaussian-process surrogate on warped unit-cube coordinates.
//!
//! Constant mean (targets are standardized), squared-exponential ARD kernel,
//! homoscedastic noise. Hyperparameters are fitted by gradient ascent (Adam
//! steps) on the log marginal likelihood from several starts.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use thiserror::Error;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum GpError {
    #[error("kernel matrix is singular even with jitter {0:e}")]
    Singular(f64),
    #[error("need at least one training point")]
    Empty,
}

const LOG_LS_BOUNDS: (f64, f64) = (-4.6, 3.0); // ~[0.01, 20]
const LOG_SF2_BOUNDS: (f64, f64) = (-3.0, 3.0);
const LOG_SN2_BOUNDS: (f64, f64) = (-13.8, -0.7); // ~[1e-6, 0.5]
const JITTERS: [f64; 7] = [0.0, 1e-10, 1e-9, 1e-8, 1e-7, 1e-6, 1e-4];

/// Kernel hyperparameters in log space.
#[derive(Debug, Clone, PartialEq)]
pub struct GpHyper {
    pub log_lengthscales: Vec<f64>,
    pub log_signal_var: f64,
    pub log_noise_var: f64,
}

impl GpHyper {
    pub fn default_for(dim: usize) -> Self {
        Self {
            log_lengthscales: vec![(0.3f64).ln(); dim],
            log_signal_var: 0.0,
            log_noise_var: (1e-3f64).ln(),
        }
    }

    fn random<R: Rng>(dim: usize, rng: &mut R) -> Self {
        Self {
            log_lengthscales: (0..dim).map(|_| rng.gen_range(-2.5..0.5)).collect(),
            log_signal_var: rng.gen_range(-1.0..1.0),
            log_noise_var: rng.gen_range(-9.0..-3.0),
        }
    }

    fn to_vec(&self) -> Vec<f64> {
        let mut v = self.log_lengthscales.clone();
        v.push(self.log_signal_var);
        v.push(self.log_noise_var);
        v
    }

    fn from_vec(v: &[f64]) -> Self {
        let d = v.len() - 2;
        Self {
            log_lengthscales: v[..d].to_vec(),
            log_signal_var: v[d],
            log_noise_var: v[d + 1],
        }
    }

    fn clamp(v: &mut [f64]) {
        let d = v.len() - 2;
        for x in &mut v[..d] {
            *x = x.clamp(LOG_LS_BOUNDS.0, LOG_LS_BOUNDS.1);
        }
        v[d] = v[d].clamp(LOG_SF2_BOUNDS.0, LOG_SF2_BOUNDS.1);
        v[d + 1] = v[d + 1].clamp(LOG_SN2_BOUNDS.0, LOG_SN2_BOUNDS.1);
    }
}

#[derive(Debug, Clone, Copy)]
pub struct FitOptions {
    pub restarts: usize,
    pub iterations: usize,
    pub learning_rate: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            restarts: 3,
            iterations: 50,
            learning_rate: 0.1,
        }
    }
}

/// A fitted GP. Predictions are in standardized target units.
#[derive(Debug, Clone)]
pub struct Gp {
    x: Vec<Vec<f64>>,
    hyper: GpHyper,
    chol: Cholesky<f64, Dyn>,
    alpha: DVector<f64>,
    y_mean: f64,
    y_std: f64,
    y_best: f64,
    jitter: f64,
}

/// Posterior over a candidate set, keeping the whitened cross-covariance so
/// callers can condition on extra (pending) points cheaply.
pub struct Posterior {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
    /// `L^{-1} K(X, C)`, `n x c`.
    whitened: DMatrix<f64>,
}

fn sq_dist_by_dim(x: &[Vec<f64>]) -> Vec<DMatrix<f64>> {
    let n = x.len();
    let d = x.first().map_or(0, Vec::len);
    (0..d)
        .map(|j| DMatrix::from_fn(n, n, |a, b| (x[a][j] - x[b][j]).powi(2)))
        .collect()
}

fn signal_kernel(dists: &[DMatrix<f64>], hyper: &GpHyper, n: usize) -> DMatrix<f64> {
    let mut k = DMatrix::zeros(n, n);
    for (dj, ls) in dists.iter().zip(&hyper.log_lengthscales) {
        let inv = (-2.0 * ls).exp();
        k.zip_apply(dj, |acc, d| *acc += d * inv);
    }
    let sf2 = hyper.log_signal_var.exp();
    k.apply(|v: &mut f64| *v = sf2 * (-0.5 * *v).exp());
    k
}

fn factor(mut k: DMatrix<f64>) -> Result<(Cholesky<f64, Dyn>, f64), GpError> {
    let n = k.nrows();
    let mut applied = 0.0;
    for &jitter in &JITTERS {
        for i in 0..n {
            k[(i, i)] += jitter - applied;
        }
        applied = jitter;
        if let Some(c) = k.clone().cholesky() {
            return Ok((c, jitter));
        }
    }
    Err(GpError::Singular(applied))
}

/// Log marginal likelihood and its gradient w.r.t. the log hyperparameters.
fn lml_and_grad(
    dists: &[DMatrix<f64>],
    y: &DVector<f64>,
    hyper: &GpHyper,
) -> Option<(f64, Vec<f64>)> {
    let n = y.len();
    let kf = signal_kernel(dists, hyper, n);
    let sn2 = hyper.log_noise_var.exp();
    let mut k = kf.clone();
    for i in 0..n {
        k[(i, i)] += sn2;
    }
    let (chol, _) = factor(k).ok()?;
    let alpha = chol.solve(y);
    let log_det: f64 = chol
        .l_dirty()
        .diagonal()
        .iter()
        .map(|v| v.ln())
        .sum::<f64>()
        * 2.0;
    let lml =
        -0.5 * y.dot(&alpha) - 0.5 * log_det - 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln();

    // W = alpha alpha^T - K^{-1}; dL/dθ = ½ tr(W dK/dθ)
    let mut w = chol.inverse();
    w.neg_mut();
    w.ger(1.0, &alpha, &alpha, 1.0);
    let mut grad = Vec::with_capacity(dists.len() + 2);
    for (dj, ls) in dists.iter().zip(&hyper.log_lengthscales) {
        let inv = (-2.0 * ls).exp();
        let mut g = 0.0;
        for ((wv, kv), dv) in w.iter().zip(kf.iter()).zip(dj.iter()) {
            g += wv * kv * dv;
        }
        grad.push(0.5 * g * inv);
    }
    let g_sf2: f64 = w.iter().zip(kf.iter()).map(|(a, b)| a * b).sum();
    grad.push(0.5 * g_sf2);
    grad.push(0.5 * sn2 * w.trace());
    Some((lml, grad))
}

impl Gp {
    /// Fits hyperparameters and conditions on `(x, y)`. `warm` seeds the
    /// first restart (e.g. the previous batch's solution).
    pub fn fit<R: Rng>(
        x: &[Vec<f64>],
        y: &[f64],
        opts: FitOptions,
        warm: Option<&GpHyper>,
        rng: &mut R,
    ) -> Result<Self, GpError> {
        if x.is_empty() {
            return Err(GpError::Empty);
        }
        let dim = x[0].len();
        let n = y.len() as f64;
        let y_mean = y.iter().sum::<f64>() / n;
        let var = y.iter().map(|v| (v - y_mean).powi(2)).sum::<f64>() / n;
        let y_std = if var > 1e-24 { var.sqrt() } else { 1.0 };
        let ys = DVector::from_iterator(y.len(), y.iter().map(|v| (v - y_mean) / y_std));
        let dists = sq_dist_by_dim(x);

        let mut best: Option<(f64, GpHyper)> = None;
        for r in 0..opts.restarts.max(1) {
            let start = match (r, warm) {
                (0, Some(h)) if h.log_lengthscales.len() == dim => h.clone(),
                (0, _) => GpHyper::default_for(dim),
                _ => GpHyper::random(dim, rng),
            };
            if let Some((lml, h)) = ascend(&dists, &ys, start, opts) {
                if best.as_ref().is_none_or(|(b, _)| lml > *b) {
                    best = Some((lml, h));
                }
            }
        }
        let hyper = best
            .map(|(_, h)| h)
            .unwrap_or_else(|| GpHyper::default_for(dim));
        Self::condition(x, y, hyper)
    }

    /// Conditions on data with fixed hyperparameters.
    pub fn condition(x: &[Vec<f64>], y: &[f64], hyper: GpHyper) -> Result<Self, GpError> {
        if x.is_empty() {
            return Err(GpError::Empty);
        }
        let n = y.len() as f64;
        let y_mean = y.iter().sum::<f64>() / n;
        let var = y.iter().map(|v| (v - y_mean).powi(2)).sum::<f64>() / n;
        let y_std = if var > 1e-24 { var.sqrt() } else { 1.0 };
        let ys = DVector::from_iterator(y.len(), y.iter().map(|v| (v - y_mean) / y_std));
        let dists = sq_dist_by_dim(x);
        let mut k = signal_kernel(&dists, &hyper, y.len());
        let sn2 = hyper.log_noise_var.exp();
        for i in 0..y.len() {
            k[(i, i)] += sn2;
        }
        let (chol, jitter) = factor(k)?;
        let alpha = chol.solve(&ys);
        let y_best = ys.iter().copied().fold(f64::INFINITY, f64::min);
        Ok(Self {
            x: x.to_vec(),
            hyper,
            chol,
            alpha,
            y_mean,
            y_std,
            y_best,
            jitter,
        })
    }

    pub fn hyper(&self) -> &GpHyper {
        &self.hyper
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn noise_var(&self) -> f64 {
        self.hyper.log_noise_var.exp() + self.jitter
    }

    pub fn signal_var(&self) -> f64 {
        self.hyper.log_signal_var.exp()
    }

    /// Best observed target in standardized units.
    pub fn best_standardized(&self) -> f64 {
        self.y_best
    }

    pub fn standardize(&self, y: f64) -> f64 {
        (y - self.y_mean) / self.y_std
    }

    pub fn kernel(&self, a: &[f64], b: &[f64]) -> f64 {
        let mut s = 0.0;
        for ((x, y), ls) in a.iter().zip(b).zip(&self.hyper.log_lengthscales) {
            s += (x - y).powi(2) * (-2.0 * ls).exp();
        }
        self.signal_var() * (-0.5 * s).exp()
    }

    pub fn posterior(&self, cands: &[Vec<f64>]) -> Posterior {
        let n = self.x.len();
        let c = cands.len();
        let cross = DMatrix::from_fn(n, c, |i, j| self.kernel(&self.x[i], &cands[j]));
        let mean: Vec<f64> = (0..c).map(|j| cross.column(j).dot(&self.alpha)).collect();
        let whitened = self
            .chol
            .l_dirty()
            .solve_lower_triangular(&cross)
            .expect("cholesky factor has a nonzero diagonal");
        let sf2 = self.signal_var();
        let var = (0..c)
            .map(|j| (sf2 - whitened.column(j).norm_squared()).max(1e-12))
            .collect();
        Posterior {
            mean,
            var,
            whitened,
        }
    }
}

impl Posterior {
    /// Posterior covariance between candidates `a` and `b`.
    pub fn cov(&self, gp: &Gp, cands: &[Vec<f64>], a: usize, b: usize) -> f64 {
        gp.kernel(&cands[a], &cands[b]) - self.whitened.column(a).dot(&self.whitened.column(b))
    }

    /// Posterior covariance of every candidate with candidate `b`.
    pub fn cov_column(&self, gp: &Gp, cands: &[Vec<f64>], b: usize) -> Vec<f64> {
        let wb = self.whitened.column(b);
        (0..cands.len())
            .map(|a| gp.kernel(&cands[a], &cands[b]) - self.whitened.column(a).dot(&wb))
            .collect()
    }

    /// Full `c x c` posterior covariance.
    pub fn cov_matrix(&self, gp: &Gp, cands: &[Vec<f64>]) -> DMatrix<f64> {
        let c = cands.len();
        let prior = DMatrix::from_fn(c, c, |a, b| gp.kernel(&cands[a], &cands[b]));
        prior - self.whitened.transpose() * &self.whitened
    }
}

fn ascend(
    dists: &[DMatrix<f64>],
    y: &DVector<f64>,
    start: GpHyper,
    opts: FitOptions,
) -> Option<(f64, GpHyper)> {
    let mut theta = start.to_vec();
    GpHyper::clamp(&mut theta);
    let (mut m, mut v) = (vec![0.0; theta.len()], vec![0.0; theta.len()]);
    let (b1, b2, eps) = (0.9, 0.999, 1e-8);
    let mut best: Option<(f64, Vec<f64>)> = None;
    for t in 1..=opts.iterations.max(1) {
        let Some((lml, grad)) = lml_and_grad(dists, y, &GpHyper::from_vec(&theta)) else {
            break;
        };
        if best.as_ref().is_none_or(|(b, _)| lml > *b) {
            best = Some((lml, theta.clone()));
        }
        for i in 0..theta.len() {
            m[i] = b1 * m[i] + (1.0 - b1) * grad[i];
            v[i] = b2 * v[i] + (1.0 - b2) * grad[i] * grad[i];
            let mh = m[i] / (1.0 - b1.powi(t as i32));
            let vh = v[i] / (1.0 - b2.powi(t as i32));
            theta[i] += opts.learning_rate * mh / (vh.sqrt() + eps);
        }
        GpHyper::clamp(&mut theta);
    }
    if let Some((lml, _)) = lml_and_grad(dists, y, &GpHyper::from_vec(&theta)) {
        if best.as_ref().is_none_or(|(b, _)| lml > *b) {
            best = Some((lml, theta));
        }
    }
    best.map(|(l, t)| (l, GpHyper::from_vec(&t)))
}

/// Expected improvement for minimization, standardized units.
pub fn expected_improvement(mean: f64, var: f64, best: f64) -> f64 {
    let sd = var.max(1e-18).sqrt();
    let z = (best - mean) / sd;
    let cdf = 0.5 * statrs::function::erf::erfc(-z / std::f64::consts::SQRT_2);
    let pdf = (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt();
    ((best - mean) * cdf + sd * pdf).max(0.0)
}
