//! Two-class Gaussian discriminant with a shared, ridge-shrunk covariance.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::logistic::sigmoid;
use super::Dataset;
use crate::error::{Error, Result};
use crate::linalg::{dot, Cholesky};

pub const SHRINKAGE: f64 = 1e-3;

/// The posterior log-odds is linear: `w . x + c`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lda {
    pub weights: Vec<f64>,
    pub offset: f64,
}

impl Lda {
    pub fn train(data: &Dataset) -> Result<Self> {
        data.require_both_classes()?;
        let p = data.n_features();
        let n = data.len();
        let n1 = data.positives();
        let n0 = n - n1;
        let mut mu = [vec![0.0; p], vec![0.0; p]];
        for i in 0..n {
            let c = data.labels()[i] as usize;
            for (m, v) in mu[c].iter_mut().zip(data.row(i)) {
                *m += v;
            }
        }
        mu[0].iter_mut().for_each(|m| *m /= n0 as f64);
        mu[1].iter_mut().for_each(|m| *m /= n1 as f64);

        let mut cov = vec![0.0; p * p];
        let mut d = vec![0.0; p];
        for i in 0..n {
            let c = data.labels()[i] as usize;
            for (dj, (v, m)) in d.iter_mut().zip(data.row(i).iter().zip(&mu[c])) {
                *dj = v - m;
            }
            for a in 0..p {
                for b in 0..=a {
                    cov[a * p + b] += d[a] * d[b];
                }
            }
        }
        for a in 0..p {
            for b in 0..=a {
                cov[a * p + b] /= n as f64;
                cov[b * p + a] = cov[a * p + b];
            }
        }
        let trace: f64 = (0..p).map(|a| cov[a * p + a]).sum();
        let mut ridge = SHRINKAGE * trace / p as f64;
        if !(ridge > 0.0) {
            ridge = SHRINKAGE;
        }
        for a in 0..p {
            cov[a * p + a] += ridge;
        }
        let chol = Cholesky::new(&cov, p).ok_or(Error::Degenerate)?;
        let diff: Vec<f64> = mu[1].iter().zip(&mu[0]).map(|(a, b)| a - b).collect();
        let weights = chol.solve(&diff);
        let q1 = dot(&mu[1], &chol.solve(&mu[1]));
        let q0 = dot(&mu[0], &chol.solve(&mu[0]));
        let offset = -0.5 * (q1 - q0) + libm::log(n1 as f64 / n0 as f64);
        Ok(Lda { weights, offset })
    }

    pub fn predict_proba(&self, z: &[f64]) -> f64 {
        sigmoid(dot(&self.weights, z) + self.offset)
    }
}
