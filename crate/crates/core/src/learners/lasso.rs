//! L1-penalized logistic regression by accelerated proximal gradient, with
//! the penalty picked on an inner stratified cross-validation.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::logistic::{logit, sigmoid};
use super::{Dataset, LearnerParams};
use crate::error::Result;
use crate::evaluation::auc;
use crate::linalg::dot;

const MAX_ITER: usize = 5000;
const TOL: f64 = 1e-8;
// the penalty path only has to rank held-out cases
const PATH_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct LassoGrid {
    pub lambdas: Vec<f64>,
    pub inner_folds: usize,
}

impl LassoGrid {
    /// Log-spaced grid, largest penalty first.
    pub fn log_spaced(min: f64, max: f64, points: usize, inner_folds: usize) -> Self {
        let points = points.max(1);
        let (lmin, lmax) = (libm::log(min), libm::log(max));
        let lambdas = (0..points)
            .map(|i| {
                if points == 1 {
                    max
                } else {
                    libm::exp(lmax - (lmax - lmin) * i as f64 / (points - 1) as f64)
                }
            })
            .collect();
        LassoGrid { lambdas, inner_folds }
    }

    pub fn from_params(p: &LearnerParams) -> Self {
        Self::log_spaced(p.lasso_lambda_min, p.lasso_lambda_max, p.lasso_grid_points, p.lasso_inner_folds)
    }
}

/// `sign(v) * max(|v| - t, 0)`.
#[inline]
pub fn soft_threshold(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lasso {
    pub weights: Vec<f64>,
    pub intercept: f64,
    pub lambda: f64,
}

impl Lasso {
    pub fn train(data: &Dataset, grid: &LassoGrid, seed: u64) -> Result<Self> {
        data.require_both_classes()?;
        let lambda = select_lambda(data, grid, seed);
        let (weights, intercept) = fit_l1_logistic(data, lambda, None);
        Ok(Lasso {
            weights,
            intercept,
            lambda,
        })
    }

    pub fn predict_proba(&self, z: &[f64]) -> f64 {
        sigmoid(dot(&self.weights, z) + self.intercept)
    }
}

/// Largest eigenvalue of `[1 X]^T [1 X] / n` by power iteration.
fn gram_spectral_bound(data: &Dataset) -> f64 {
    let p = data.n_features();
    let n = data.len() as f64;
    let mut v = vec![1.0; p + 1];
    let mut est = 1.0;
    for _ in 0..60 {
        let mut next = vec![0.0; p + 1];
        for i in 0..data.len() {
            let row = data.row(i);
            let s = v[0] + dot(&v[1..], row);
            next[0] += s;
            for (nj, x) in next[1..].iter_mut().zip(row) {
                *nj += s * x;
            }
        }
        let norm = libm::sqrt(dot(&next, &next));
        if norm == 0.0 {
            break;
        }
        est = norm / libm::sqrt(dot(&v, &v)) / n;
        v = next.into_iter().map(|x| x / norm).collect();
    }
    est
}

/// Mean logistic loss gradient at `(b, w)` into `(gb, gw)`.
fn gradient(data: &Dataset, w: &[f64], b: f64, gw: &mut [f64]) -> f64 {
    gw.iter_mut().for_each(|g| *g = 0.0);
    let mut gb = 0.0;
    for i in 0..data.len() {
        let row = data.row(i);
        let r = sigmoid(b + dot(w, row)) - if data.labels()[i] { 1.0 } else { 0.0 };
        gb += r;
        for (g, x) in gw.iter_mut().zip(row) {
            *g += r * x;
        }
    }
    let n = data.len() as f64;
    gw.iter_mut().for_each(|g| *g /= n);
    gb / n
}

/// Exact intercept for fixed weights (1-D Newton).
fn polish_intercept(data: &Dataset, w: &[f64], mut b: f64) -> f64 {
    let offsets: Vec<f64> = (0..data.len()).map(|i| dot(w, data.row(i))).collect();
    let positives = data.positives() as f64;
    for _ in 0..100 {
        let (mut g, mut h) = (-positives, 0.0);
        for &o in &offsets {
            let p = sigmoid(b + o);
            g += p;
            h += p * (1.0 - p);
        }
        if h <= 0.0 {
            break;
        }
        let step = g / h;
        b -= step;
        if step.abs() < 1e-15 * b.abs().max(1.0) {
            break;
        }
    }
    b
}

/// Minimize `mean logloss + lambda * |w|_1` (intercept unpenalized).
pub fn fit_l1_logistic(data: &Dataset, lambda: f64, warm: Option<(&[f64], f64)>) -> (Vec<f64>, f64) {
    fit_with_tol(data, lambda, warm, TOL, step_size(data))
}

fn step_size(data: &Dataset) -> f64 {
    1.0 / (0.25 * gram_spectral_bound(data) * 1.01 + 1e-12)
}

fn fit_with_tol(data: &Dataset, lambda: f64, warm: Option<(&[f64], f64)>, tol: f64, step: f64) -> (Vec<f64>, f64) {
    let p = data.n_features();
    let prevalence = data.positives() as f64 / data.len() as f64;
    let (mut w, mut b) = match warm {
        Some((w, b)) => (w.to_vec(), b),
        None => (vec![0.0; p], logit(prevalence.clamp(1e-12, 1.0 - 1e-12))),
    };
    let (mut yw, mut yb) = (w.clone(), b);
    let mut t = 1.0f64;
    let mut gw = vec![0.0; p];
    let mut next_w = vec![0.0; p];
    for _ in 0..MAX_ITER {
        let gb = gradient(data, &yw, yb, &mut gw);
        let next_b = yb - step * gb;
        for j in 0..p {
            next_w[j] = soft_threshold(yw[j] - step * gw[j], step * lambda);
        }
        let mut delta = (next_b - b).abs();
        // restart momentum when it points against the proximal step
        let mut agreement = (yb - next_b) * (next_b - b);
        for j in 0..p {
            delta = delta.max((next_w[j] - w[j]).abs());
            agreement += (yw[j] - next_w[j]) * (next_w[j] - w[j]);
        }
        let t_next = if agreement > 0.0 {
            1.0
        } else {
            (1.0 + libm::sqrt(1.0 + 4.0 * t * t)) / 2.0
        };
        let momentum = if agreement > 0.0 { 0.0 } else { (t - 1.0) / t_next };
        for j in 0..p {
            yw[j] = next_w[j] + momentum * (next_w[j] - w[j]);
        }
        yb = next_b + momentum * (next_b - b);
        w.copy_from_slice(&next_w);
        b = next_b;
        t = t_next;
        if delta < tol {
            break;
        }
    }
    let b = polish_intercept(data, &w, b);
    (w, b)
}

/// Stratified fold assignment from a seeded shuffle of each class.
pub(crate) fn stratified_folds(labels: &[bool], folds: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assign = vec![0; labels.len()];
    for class in [true, false] {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        idx.shuffle(&mut rng);
        for (k, i) in idx.into_iter().enumerate() {
            assign[i] = k % folds;
        }
    }
    assign
}

/// Grid penalty with the best mean held-out AUC; exact ties go to the
/// larger penalty.
fn select_lambda(data: &Dataset, grid: &LassoGrid, seed: u64) -> f64 {
    let folds = grid.inner_folds.max(2);
    let assign = stratified_folds(data.labels(), folds, seed);
    let mut totals = vec![0.0; grid.lambdas.len()];
    let mut used = 0usize;
    for f in 0..folds {
        let train_idx: Vec<usize> = (0..data.len()).filter(|&i| assign[i] != f).collect();
        let test_idx: Vec<usize> = (0..data.len()).filter(|&i| assign[i] == f).collect();
        let train = data.subset(&train_idx);
        let test = data.subset(&test_idx);
        if train.require_both_classes().is_err() || test.require_both_classes().is_err() {
            continue;
        }
        used += 1;
        let mut warm: Option<(Vec<f64>, f64)> = None;
        let step = step_size(&train);
        for (k, &lambda) in grid.lambdas.iter().enumerate() {
            let (w, b) = fit_with_tol(&train, lambda, warm.as_ref().map(|(w, b)| (w.as_slice(), *b)), PATH_TOL, step);
            let scores: Vec<f64> = (0..test.len()).map(|i| b + dot(&w, test.row(i))).collect();
            totals[k] += auc(&scores, test.labels()).unwrap_or(0.5);
            warm = Some((w, b));
        }
    }
    if used == 0 {
        return grid.lambdas[0];
    }
    let mut best = 0;
    for k in 1..totals.len() {
        if totals[k] > totals[best] {
            best = k;
        }
    }
    grid.lambdas[best]
}
