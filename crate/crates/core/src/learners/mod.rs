//! From-scratch binary classifiers and their soft-voting combination.
//!
//! Every learner trains on z-scored features and exposes a probability in
//! `[0, 1]`. Training is sequential and deterministic given the seed.

pub mod bswims;
pub mod forest;
pub mod knn;
pub mod lasso;
pub mod lda;
pub mod logistic;
pub mod nb;
pub mod svm;

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{derive_seed, Stream};

pub use bswims::Bswims;
pub use forest::Forest;
pub use knn::Knn;
pub use lasso::Lasso;
pub use lda::Lda;
pub use nb::NaiveBayes;
pub use svm::LinearSvm;

/// Row-major design matrix with binary labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    n_features: usize,
    x: Vec<f64>,
    y: Vec<bool>,
}

impl Dataset {
    pub fn new(n_features: usize, x: Vec<f64>, y: Vec<bool>) -> Result<Self> {
        if x.len() != n_features * y.len() {
            return Err(Error::DimensionMismatch {
                expected: n_features * y.len(),
                found: x.len(),
            });
        }
        Ok(Dataset { n_features, x, y })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R], labels: &[bool]) -> Result<Self> {
        let p = rows.first().map_or(0, |r| r.as_ref().len());
        if rows.len() != labels.len() {
            return Err(Error::DimensionMismatch {
                expected: rows.len(),
                found: labels.len(),
            });
        }
        let mut x = Vec::with_capacity(p * rows.len());
        for r in rows {
            let r = r.as_ref();
            if r.len() != p {
                return Err(Error::DimensionMismatch {
                    expected: p,
                    found: r.len(),
                });
            }
            x.extend_from_slice(r);
        }
        Dataset::new(p, x, labels.to_vec())
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.n_features..(i + 1) * self.n_features]
    }

    pub fn labels(&self) -> &[bool] {
        &self.y
    }

    pub fn positives(&self) -> usize {
        self.y.iter().filter(|&&l| l).count()
    }

    pub fn subset(&self, idx: &[usize]) -> Dataset {
        let mut x = Vec::with_capacity(idx.len() * self.n_features);
        let mut y = Vec::with_capacity(idx.len());
        for &i in idx {
            x.extend_from_slice(self.row(i));
            y.push(self.y[i]);
        }
        Dataset {
            n_features: self.n_features,
            x,
            y,
        }
    }

    pub fn require_both_classes(&self) -> Result<()> {
        let pos = self.positives();
        if pos == 0 || pos == self.len() {
            Err(Error::SingleClass)
        } else {
            Ok(())
        }
    }
}

/// Scaled features are clipped to this magnitude so extreme inputs stay
/// finite through every learner.
pub const SCALED_LIMIT: f64 = 1e6;

/// Per-feature z-scoring fitted on a training split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub mean: Vec<f64>,
    pub stdev: Vec<f64>,
}

impl Scaler {
    pub const STDEV_FLOOR: f64 = 1e-8;

    pub fn fit(data: &Dataset) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::Empty("training set"));
        }
        let n = data.len() as f64;
        let p = data.n_features();
        let mut mean = alloc::vec![0.0; p];
        for i in 0..data.len() {
            for (m, v) in mean.iter_mut().zip(data.row(i)) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = alloc::vec![0.0; p];
        for i in 0..data.len() {
            for ((s, v), m) in var.iter_mut().zip(data.row(i)).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let stdev = var
            .into_iter()
            .map(|s| libm::sqrt(s / n).max(Self::STDEV_FLOOR))
            .collect();
        Ok(Scaler { mean, stdev })
    }

    pub fn transform_row(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.mean.iter().zip(&self.stdev))
            .map(|(v, (m, s))| {
                let z = (v - m) / s;
                if z.is_nan() {
                    0.0
                } else {
                    z.clamp(-SCALED_LIMIT, SCALED_LIMIT)
                }
            })
            .collect()
    }

    pub fn transform(&self, data: &Dataset) -> Dataset {
        let mut x = Vec::with_capacity(data.x.len());
        for i in 0..data.len() {
            x.extend(self.transform_row(data.row(i)));
        }
        Dataset {
            n_features: data.n_features,
            x,
            y: data.y.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LearnerKind {
    Knn,
    Svm,
    Lasso,
    Bswims,
    Lda,
    Nb,
    Rf,
}

impl LearnerKind {
    pub const ALL: [LearnerKind; 7] = [
        LearnerKind::Knn,
        LearnerKind::Svm,
        LearnerKind::Lasso,
        LearnerKind::Bswims,
        LearnerKind::Lda,
        LearnerKind::Nb,
        LearnerKind::Rf,
    ];

    pub fn name(self) -> &'static str {
        match self {
            LearnerKind::Knn => "knn",
            LearnerKind::Svm => "svm",
            LearnerKind::Lasso => "lasso",
            LearnerKind::Bswims => "bswims",
            LearnerKind::Lda => "lda",
            LearnerKind::Nb => "nb",
            LearnerKind::Rf => "rf",
        }
    }
}

/// Hyperparameters of all seven learners.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnerParams {
    pub knn_k: usize,
    pub svm_lambda: f64,
    pub svm_epochs: usize,
    pub lasso_lambda_min: f64,
    pub lasso_lambda_max: f64,
    pub lasso_grid_points: usize,
    pub lasso_inner_folds: usize,
    pub bswims_bootstraps: usize,
    pub bswims_z_threshold: f64,
    pub bswims_max_size: usize,
    pub rf_trees: usize,
    pub rf_max_depth: usize,
    pub rf_min_leaf: usize,
}

impl Default for LearnerParams {
    fn default() -> Self {
        LearnerParams {
            knn_k: 5,
            svm_lambda: 1e-3,
            svm_epochs: 200,
            lasso_lambda_min: 1e-4,
            lasso_lambda_max: 1e-1,
            lasso_grid_points: 10,
            lasso_inner_folds: 3,
            bswims_bootstraps: 20,
            bswims_z_threshold: 1.96,
            bswims_max_size: 10,
            rf_trees: 200,
            rf_max_depth: 12,
            rf_min_leaf: 5,
        }
    }
}

/// Learned state of one member; operates on scaled features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Member {
    Knn(Knn),
    Svm(LinearSvm),
    Lasso(Lasso),
    Bswims(Bswims),
    Lda(Lda),
    Nb(NaiveBayes),
    Rf(Forest),
}

impl Member {
    pub fn kind(&self) -> LearnerKind {
        match self {
            Member::Knn(_) => LearnerKind::Knn,
            Member::Svm(_) => LearnerKind::Svm,
            Member::Lasso(_) => LearnerKind::Lasso,
            Member::Bswims(_) => LearnerKind::Bswims,
            Member::Lda(_) => LearnerKind::Lda,
            Member::Nb(_) => LearnerKind::Nb,
            Member::Rf(_) => LearnerKind::Rf,
        }
    }

    /// Train on an already scaled dataset.
    pub fn train(kind: LearnerKind, scaled: &Dataset, params: &LearnerParams, seed: u64) -> Result<Member> {
        Ok(match kind {
            LearnerKind::Knn => Member::Knn(Knn::train(scaled, params.knn_k)?),
            LearnerKind::Svm => Member::Svm(LinearSvm::train(scaled, params.svm_lambda, params.svm_epochs)?),
            LearnerKind::Lasso => Member::Lasso(Lasso::train(
                scaled,
                &lasso::LassoGrid::from_params(params),
                derive_seed(seed, Stream::Lasso, 0),
            )?),
            LearnerKind::Bswims => Member::Bswims(Bswims::train(
                scaled,
                &bswims::BswimsParams::from_params(params),
                derive_seed(seed, Stream::Bswims, 0),
            )?),
            LearnerKind::Lda => Member::Lda(Lda::train(scaled)?),
            LearnerKind::Nb => Member::Nb(NaiveBayes::train(scaled)?),
            LearnerKind::Rf => Member::Rf(Forest::train(
                scaled,
                &forest::ForestParams::from_params(params),
                derive_seed(seed, Stream::Forest, 0),
            )?),
        })
    }

    pub fn predict_scaled(&self, z: &[f64]) -> f64 {
        let p = match self {
            Member::Knn(m) => m.predict_proba(z),
            Member::Svm(m) => m.predict_proba(z),
            Member::Lasso(m) => m.predict_proba(z),
            Member::Bswims(m) => m.predict_proba(z),
            Member::Lda(m) => m.predict_proba(z),
            Member::Nb(m) => m.predict_proba(z),
            Member::Rf(m) => m.predict_proba(z),
        };
        if p.is_nan() {
            0.5
        } else {
            p.clamp(0.0, 1.0)
        }
    }
}

/// A single learner bundled with its training scaler.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub scaler: Scaler,
    pub member: Member,
}

impl TrainedModel {
    pub fn train(kind: LearnerKind, data: &Dataset, params: &LearnerParams, seed: u64) -> Result<Self> {
        let scaler = Scaler::fit(data)?;
        let scaled = scaler.transform(data);
        let member = Member::train(kind, &scaled, params, seed)?;
        Ok(TrainedModel { scaler, member })
    }

    pub fn kind(&self) -> LearnerKind {
        self.member.kind()
    }

    pub fn predict_proba(&self, x: &[f64]) -> f64 {
        self.member.predict_scaled(&self.scaler.transform_row(x))
    }
}

/// Seven members sharing one scaler; the prediction is their mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubEnsemble {
    pub scaler: Scaler,
    pub members: Vec<Member>,
}

impl SubEnsemble {
    pub fn train(data: &Dataset, params: &LearnerParams, seed: u64) -> Result<Self> {
        data.require_both_classes()?;
        let scaler = Scaler::fit(data)?;
        let scaled = scaler.transform(data);
        let members = LearnerKind::ALL
            .iter()
            .map(|&kind| Member::train(kind, &scaled, params, seed))
            .collect::<Result<Vec<_>>>()?;
        Ok(SubEnsemble { scaler, members })
    }

    pub fn member_probas(&self, x: &[f64]) -> Vec<f64> {
        let z = self.scaler.transform_row(x);
        self.members.iter().map(|m| m.predict_scaled(&z)).collect()
    }

    pub fn predict_proba(&self, x: &[f64]) -> f64 {
        soft_vote(&self.member_probas(x))
    }
}

/// Unweighted mean of member probabilities.
pub fn soft_vote(probas: &[f64]) -> f64 {
    if probas.is_empty() {
        return 0.5;
    }
    // summing in sorted order makes the result independent of member order
    let mut sorted = probas.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mean = sorted.iter().sum::<f64>() / probas.len() as f64;
    let (lo, hi) = probas
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &p| (lo.min(p), hi.max(p)));
    mean.clamp(lo, hi)
}
