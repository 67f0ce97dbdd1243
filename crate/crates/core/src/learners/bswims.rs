//! Bagged forward stage-wise logistic selection.

use alloc::vec::Vec;

use rand::RngExt;
use serde::{Deserialize, Serialize};

use super::logistic::{logit, newton_logistic, sigmoid, NewtonOptions};
use super::{Dataset, LearnerParams};
use crate::error::Result;
use crate::linalg::{dot, Cholesky};
use crate::rng::{derive_seed, Stream};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct BswimsParams {
    pub bootstraps: usize,
    pub z_threshold: f64,
    pub max_size: usize,
}

impl BswimsParams {
    pub fn from_params(p: &LearnerParams) -> Self {
        BswimsParams {
            bootstraps: p.bswims_bootstraps,
            z_threshold: p.bswims_z_threshold,
            max_size: p.bswims_max_size,
        }
    }
}

/// One bootstrap's logistic model over a selected feature subset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Submodel {
    pub features: Vec<usize>,
    /// Intercept first, then one coefficient per selected feature.
    pub coef: Vec<f64>,
}

impl Submodel {
    fn predict(&self, z: &[f64]) -> f64 {
        let eta = self.coef[0]
            + self
                .features
                .iter()
                .zip(&self.coef[1..])
                .map(|(&j, c)| c * z[j])
                .sum::<f64>();
        sigmoid(eta)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bswims {
    pub models: Vec<Submodel>,
}

// A tiny ridge keeps Newton finite when a candidate separates the sample.
const RIDGE: f64 = 1e-6;

fn newton_opts() -> NewtonOptions {
    NewtonOptions {
        max_iter: 25,
        tol: 1e-6,
        ridge: RIDGE,
    }
}

// Candidates are ranked by the score test at the current model; only the
// leading few get a full Newton refit and a Wald z.
const SCREEN: usize = 8;

fn score_statistics(data: &Dataset, targets: &[f64], selected: &[usize], coef: &[f64]) -> Vec<(usize, f64)> {
    let n = data.len();
    let k = selected.len() + 1;
    let mut resid = Vec::with_capacity(n);
    let mut weight = Vec::with_capacity(n);
    let mut hess = alloc::vec![0.0; k * k];
    let mut x = alloc::vec![0.0; k];
    for i in 0..n {
        let row = data.row(i);
        x[0] = 1.0;
        for (a, &s) in selected.iter().enumerate() {
            x[a + 1] = row[s];
        }
        let eta: f64 = x.iter().zip(coef).map(|(a, b)| a * b).sum();
        let p = sigmoid(eta);
        let w = (p * (1.0 - p)).max(1e-12);
        resid.push(targets[i] - p);
        weight.push(w);
        for a in 0..k {
            for b in 0..k {
                hess[a * k + b] += w * x[a] * x[b];
            }
        }
    }
    for a in 1..k {
        hess[a * k + a] += RIDGE;
    }
    let Some(chol) = Cholesky::new(&hess, k) else {
        return Vec::new();
    };
    let mut out = Vec::new();
    let mut cross = alloc::vec![0.0; k];
    for j in 0..data.n_features() {
        if selected.contains(&j) {
            continue;
        }
        let (mut u, mut a) = (0.0, 0.0);
        cross.iter_mut().for_each(|c| *c = 0.0);
        for i in 0..n {
            let row = data.row(i);
            let xj = row[j];
            let wx = weight[i] * xj;
            u += resid[i] * xj;
            a += wx * xj;
            cross[0] += wx;
            for (c, &s) in selected.iter().enumerate() {
                cross[c + 1] += wx * row[s];
            }
        }
        let v = a + RIDGE - dot(&cross, &chol.solve(&cross));
        let stat = if v > 1e-12 { u * u / v } else { 0.0 };
        if stat.is_finite() {
            out.push((j, stat));
        }
    }
    out.sort_by(|x, y| y.1.total_cmp(&x.1).then(x.0.cmp(&y.0)));
    out.truncate(SCREEN);
    out
}

fn forward_select(data: &Dataset, params: &BswimsParams) -> Submodel {
    let n = data.len();
    let targets: Vec<f64> = data.labels().iter().map(|&l| if l { 1.0 } else { 0.0 }).collect();
    let prevalence = (data.positives() as f64 / n as f64).clamp(1e-6, 1.0 - 1e-6);
    let mut selected: Vec<usize> = Vec::new();
    let mut coef = alloc::vec![logit(prevalence)];
    while selected.len() < params.max_size {
        let k = selected.len() + 2;
        let mut best: Option<(usize, f64, Vec<f64>)> = None;
        let mut design = Vec::with_capacity(n * k);
        for (j, _) in score_statistics(data, &targets, &selected, &coef) {
            design.clear();
            for i in 0..n {
                let row = data.row(i);
                design.push(1.0);
                design.extend(selected.iter().map(|&s| row[s]));
                design.push(row[j]);
            }
            let mut init = coef.clone();
            init.push(0.0);
            let Ok(fit) = newton_logistic(&design, k, &targets, Some(&init), &newton_opts()) else {
                continue;
            };
            let z = fit.z_score(k - 1).abs();
            if z.is_finite() && best.as_ref().map_or(true, |b| z > b.1 || (z == b.1 && j < b.0)) {
                best = Some((j, z, fit.beta));
            }
        }
        match best {
            Some((j, z, beta)) if z >= params.z_threshold => {
                selected.push(j);
                coef = beta;
            }
            _ => break,
        }
    }
    Submodel {
        features: selected,
        coef,
    }
}

impl Bswims {
    pub fn train(data: &Dataset, params: &BswimsParams, seed: u64) -> Result<Self> {
        data.require_both_classes()?;
        let n = data.len();
        let mut models = Vec::with_capacity(params.bootstraps);
        for b in 0..params.bootstraps {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, Stream::Bswims, b as u64));
            // resample until both classes appear; the full sample is the fallback
            let mut sample = None;
            for _ in 0..100 {
                let idx: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
                let s = data.subset(&idx);
                if s.require_both_classes().is_ok() {
                    sample = Some(s);
                    break;
                }
            }
            let sample = sample.unwrap_or_else(|| data.clone());
            models.push(forward_select(&sample, params));
        }
        Ok(Bswims { models })
    }

    pub fn predict_proba(&self, z: &[f64]) -> f64 {
        if self.models.is_empty() {
            return 0.5;
        }
        self.models.iter().map(|m| m.predict(z)).sum::<f64>() / self.models.len() as f64
    }

    pub fn model_sizes(&self) -> Vec<usize> {
        self.models.iter().map(|m| m.features.len()).collect()
    }
}
