//! Damped Newton solver for (optionally ridge-penalized) logistic
//! regression on a dense design, shared by the stage-wise selector and the
//! sigmoid calibrators.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg::Cholesky;

#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z.is_nan() {
        0.5
    } else if z >= 0.0 {
        1.0 / (1.0 + libm::exp(-z))
    } else {
        let e = libm::exp(z);
        e / (1.0 + e)
    }
}

#[inline]
pub fn logit(p: f64) -> f64 {
    libm::log(p / (1.0 - p))
}

/// `log(1 + exp(z))` without overflow.
#[inline]
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + libm::log1p(libm::exp(-z))
    } else {
        libm::log1p(libm::exp(z))
    }
}

#[derive(Debug, Clone)]
pub struct NewtonOptions {
    pub max_iter: usize,
    pub tol: f64,
    /// L2 penalty on every coefficient except the first (the intercept).
    pub ridge: f64,
}

#[derive(Debug, Clone)]
pub struct LogisticFit {
    pub beta: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    hessian: Option<Cholesky>,
}

impl LogisticFit {
    /// Wald z statistic of coefficient `j`.
    pub fn z_score(&self, j: usize) -> f64 {
        match &self.hessian {
            Some(h) => {
                let var = h.inverse_diag(j);
                if var > 0.0 {
                    self.beta[j] / libm::sqrt(var)
                } else {
                    0.0
                }
            }
            None => 0.0,
        }
    }
}

/// Penalized negative log-likelihood of soft targets.
fn objective(design: &[f64], k: usize, targets: &[f64], beta: &[f64], ridge: f64) -> f64 {
    let mut nll = 0.0;
    for (row, &t) in design.chunks_exact(k).zip(targets) {
        let eta: f64 = row.iter().zip(beta).map(|(x, b)| x * b).sum();
        nll += softplus(eta) - t * eta;
    }
    nll + 0.5 * ridge * beta[1..].iter().map(|b| b * b).sum::<f64>()
}

/// Fit `P(y=1|x) = sigmoid(x . beta)` to targets in `[0, 1]`.
///
/// `design` is row-major with `k` columns; column 0 should be the constant.
/// Steps are halved until the penalized likelihood does not get worse.
pub fn newton_logistic(
    design: &[f64],
    k: usize,
    targets: &[f64],
    init: Option<&[f64]>,
    opts: &NewtonOptions,
) -> Result<LogisticFit> {
    let n = targets.len();
    if design.len() != n * k {
        return Err(Error::DimensionMismatch {
            expected: n * k,
            found: design.len(),
        });
    }
    let mut beta = init.map_or_else(|| vec![0.0; k], <[f64]>::to_vec);
    let mut current = objective(design, k, targets, &beta, opts.ridge);
    let mut grad = vec![0.0; k];
    let mut hess = vec![0.0; k * k];
    let mut chol = None;
    for iter in 1..=opts.max_iter {
        grad.iter_mut().for_each(|g| *g = 0.0);
        hess.iter_mut().for_each(|h| *h = 0.0);
        for (row, &t) in design.chunks_exact(k).zip(targets) {
            let eta: f64 = row.iter().zip(&beta).map(|(x, b)| x * b).sum();
            let p = sigmoid(eta);
            let w = (p * (1.0 - p)).max(1e-12);
            for a in 0..k {
                grad[a] += (p - t) * row[a];
                let wa = w * row[a];
                for b in 0..=a {
                    hess[a * k + b] += wa * row[b];
                }
            }
        }
        for a in 1..k {
            grad[a] += opts.ridge * beta[a];
            hess[a * k + a] += opts.ridge;
        }
        for a in 0..k {
            for b in 0..a {
                hess[b * k + a] = hess[a * k + b];
            }
        }
        let Some(c) = Cholesky::new(&hess, k).or_else(|| {
            let mut jittered = hess.clone();
            let scale = (0..k).map(|a| hess[a * k + a]).fold(0.0, f64::max).max(1.0);
            for a in 0..k {
                jittered[a * k + a] += 1e-8 * scale;
            }
            Cholesky::new(&jittered, k)
        }) else {
            return Err(Error::NonConvergence {
                what: "logistic Newton",
                iterations: iter,
            });
        };
        let step = c.solve(&grad);
        chol = Some(c);

        let mut scale = 1.0;
        let mut accepted = false;
        let mut candidate = beta.clone();
        for _ in 0..40 {
            for a in 0..k {
                candidate[a] = beta[a] - scale * step[a];
            }
            let value = objective(design, k, targets, &candidate, opts.ridge);
            if value <= current {
                current = value;
                accepted = true;
                break;
            }
            scale *= 0.5;
        }
        let max_step = step.iter().fold(0.0f64, |m, s| m.max((s * scale).abs()));
        if accepted {
            core::mem::swap(&mut beta, &mut candidate);
        }
        if !accepted || max_step < opts.tol {
            return Ok(LogisticFit {
                beta,
                converged: true,
                iterations: iter,
                hessian: chol,
            });
        }
    }
    Ok(LogisticFit {
        beta,
        converged: false,
        iterations: opts.max_iter,
        hessian: chol,
    })
}

/// Two-parameter sigmoid `sigmoid(a*s + b)` fitted to binary labels with
/// Platt's prior-corrected targets, which keeps the fit finite on
/// separable scores.
pub fn fit_sigmoid(scores: &[f64], labels: &[bool], max_iter: usize, tol: f64) -> Result<(f64, f64, bool)> {
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::SingleClass);
    }
    let hi = (n_pos as f64 + 1.0) / (n_pos as f64 + 2.0);
    let lo = 1.0 / (n_neg as f64 + 2.0);
    let targets: Vec<f64> = labels.iter().map(|&l| if l { hi } else { lo }).collect();
    let mut design = Vec::with_capacity(scores.len() * 2);
    for &s in scores {
        design.push(1.0);
        design.push(s);
    }
    let fit = newton_logistic(
        &design,
        2,
        &targets,
        None,
        &NewtonOptions {
            max_iter,
            tol,
            ridge: 0.0,
        },
    )?;
    Ok((fit.beta[1], fit.beta[0], fit.converged))
}
