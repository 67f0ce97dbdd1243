use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::{Error, Result};

/// k-nearest neighbours by Euclidean distance; distance ties go to the
/// lower training row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Knn {
    k: usize,
    n_features: usize,
    x: Vec<f64>,
    y: Vec<bool>,
}

impl Knn {
    pub fn train(data: &Dataset, k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::invalid("k must be positive"));
        }
        if k > data.len() {
            return Err(Error::NeighborsExceedRows { k, n: data.len() });
        }
        let mut x = Vec::with_capacity(data.len() * data.n_features());
        for i in 0..data.len() {
            x.extend_from_slice(data.row(i));
        }
        Ok(Knn {
            k,
            n_features: data.n_features(),
            x,
            y: data.labels().to_vec(),
        })
    }

    pub fn predict_proba(&self, z: &[f64]) -> f64 {
        let mut dist: Vec<(f64, usize)> = self
            .x
            .chunks_exact(self.n_features)
            .enumerate()
            .map(|(i, row)| (row.iter().zip(z).map(|(a, b)| (a - b) * (a - b)).sum(), i))
            .collect();
        let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        if self.k < dist.len() {
            dist.select_nth_unstable_by(self.k - 1, cmp);
        }
        let hits = dist[..self.k].iter().filter(|(_, i)| self.y[*i]).count();
        hits as f64 / self.k as f64
    }
}
