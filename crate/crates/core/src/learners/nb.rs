//! Gaussian naive Bayes.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::logistic::sigmoid;
use super::Dataset;
use crate::error::Result;

pub const VAR_FLOOR: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NaiveBayes {
    /// Index 0 is the negative class.
    pub mean: [Vec<f64>; 2],
    pub var: [Vec<f64>; 2],
    pub log_prior_ratio: f64,
}

impl NaiveBayes {
    pub fn train(data: &Dataset) -> Result<Self> {
        data.require_both_classes()?;
        let p = data.n_features();
        let counts = [(data.len() - data.positives()) as f64, data.positives() as f64];
        let mut mean = [vec![0.0; p], vec![0.0; p]];
        for i in 0..data.len() {
            let c = data.labels()[i] as usize;
            for (m, v) in mean[c].iter_mut().zip(data.row(i)) {
                *m += v;
            }
        }
        for c in 0..2 {
            mean[c].iter_mut().for_each(|m| *m /= counts[c]);
        }
        let mut var = [vec![0.0; p], vec![0.0; p]];
        for i in 0..data.len() {
            let c = data.labels()[i] as usize;
            for ((s, v), m) in var[c].iter_mut().zip(data.row(i)).zip(&mean[c]) {
                *s += (v - m) * (v - m);
            }
        }
        for c in 0..2 {
            var[c].iter_mut().for_each(|s| *s = (*s / counts[c]).max(VAR_FLOOR));
        }
        Ok(NaiveBayes {
            mean,
            var,
            log_prior_ratio: libm::log(counts[1] / counts[0]),
        })
    }

    pub fn log_odds(&self, z: &[f64]) -> f64 {
        let mut acc = self.log_prior_ratio;
        for (j, &x) in z.iter().enumerate() {
            let (m0, v0) = (self.mean[0][j], self.var[0][j]);
            let (m1, v1) = (self.mean[1][j], self.var[1][j]);
            acc += (x - m0) * (x - m0) / (2.0 * v0) - (x - m1) * (x - m1) / (2.0 * v1) + 0.5 * libm::log(v0 / v1);
        }
        acc
    }

    pub fn predict_proba(&self, z: &[f64]) -> f64 {
        sigmoid(self.log_odds(z))
    }
}
