use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::logistic::{fit_sigmoid, sigmoid};
use super::Dataset;
use crate::error::Result;
use crate::linalg::dot;

/// Initial step of the subgradient schedule `eta0 / (1 + eta0 * lambda * t)`.
const ETA0: f64 = 0.1;

/// Linear soft-margin SVM with a sigmoid map fitted on training margins.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearSvm {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub platt_slope: f64,
    pub platt_intercept: f64,
}

impl LinearSvm {
    /// Full-batch subgradient descent on
    /// `lambda/2 |w|^2 + mean(max(0, 1 - y (w.x + b)))`, keeping the iterate
    /// with the lowest objective.
    pub fn train(data: &Dataset, lambda: f64, epochs: usize) -> Result<Self> {
        data.require_both_classes()?;
        let n = data.len();
        let p = data.n_features();
        let signs: Vec<f64> = data.labels().iter().map(|&l| if l { 1.0 } else { -1.0 }).collect();
        let mut w = vec![0.0; p];
        let mut b = 0.0;
        let mut best = (f64::INFINITY, w.clone(), b);
        let mut grad = vec![0.0; p];
        for t in 0..=epochs {
            grad.iter_mut().for_each(|g| *g = 0.0);
            let mut grad_b = 0.0;
            let mut hinge = 0.0;
            for i in 0..n {
                let row = data.row(i);
                let margin = signs[i] * (dot(&w, row) + b);
                if margin < 1.0 {
                    hinge += 1.0 - margin;
                    for (g, x) in grad.iter_mut().zip(row) {
                        *g -= signs[i] * x;
                    }
                    grad_b -= signs[i];
                }
            }
            let objective = 0.5 * lambda * dot(&w, &w) + hinge / n as f64;
            if objective < best.0 {
                best = (objective, w.clone(), b);
            }
            if t == epochs {
                break;
            }
            let eta = ETA0 / (1.0 + ETA0 * lambda * (t + 1) as f64);
            for (wj, g) in w.iter_mut().zip(&grad) {
                *wj -= eta * (lambda * *wj + g / n as f64);
            }
            b -= eta * grad_b / n as f64;
        }
        let (_, weights, bias) = best;
        let margins: Vec<f64> = (0..n).map(|i| dot(&weights, data.row(i)) + bias).collect();
        let (platt_slope, platt_intercept, _) = fit_sigmoid(&margins, data.labels(), 100, 1e-10)?;
        Ok(LinearSvm {
            weights,
            bias,
            platt_slope,
            platt_intercept,
        })
    }

    pub fn decision(&self, z: &[f64]) -> f64 {
        dot(&self.weights, z) + self.bias
    }

    pub fn predict_proba(&self, z: &[f64]) -> f64 {
        sigmoid(self.platt_slope * self.decision(z) + self.platt_intercept)
    }
}
