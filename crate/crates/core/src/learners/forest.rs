//! Bagged CART trees with Gini splits and per-split feature subsampling.

use alloc::vec::Vec;

use rand::seq::index;
use rand::RngExt;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Dataset, LearnerParams};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, Stream};

#[derive(Debug, Clone, PartialEq)]
pub struct ForestParams {
    pub trees: usize,
    pub max_depth: usize,
    pub min_leaf: usize,
    /// Features tried per split; `None` means `floor(sqrt(p))`.
    pub features_per_split: Option<usize>,
}

impl ForestParams {
    pub fn from_params(p: &LearnerParams) -> Self {
        ForestParams {
            trees: p.rf_trees,
            max_depth: p.rf_max_depth,
            min_leaf: p.rf_min_leaf,
            features_per_split: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Leaf(f64),
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

/// Nodes in preorder; the root is node 0. `x[feature] <= threshold` goes left.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn predict(&self, z: &[f64]) -> f64 {
        let mut at = 0;
        loop {
            match self.nodes[at] {
                Node::Leaf(p) => return p,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => at = if z[feature] <= threshold { left } else { right },
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    pub trees: Vec<Tree>,
}

struct Builder<'a> {
    data: &'a Dataset,
    params: &'a ForestParams,
    mtry: usize,
    rng: ChaCha8Rng,
    nodes: Vec<Node>,
    scratch: Vec<(f64, bool)>,
}

fn gini_sum(pos: f64, n: f64) -> f64 {
    // n * gini impurity
    if n == 0.0 {
        0.0
    } else {
        2.0 * pos * (n - pos) / n
    }
}

impl Builder<'_> {
    fn best_split(&mut self, rows: &[usize]) -> Option<(usize, f64)> {
        let p = self.data.n_features();
        let n = rows.len() as f64;
        let pos_total = rows.iter().filter(|&&i| self.data.labels()[i]).count() as f64;
        let parent = gini_sum(pos_total, n);
        let min_leaf = self.params.min_leaf.max(1);
        let mut best: Option<(usize, f64, f64)> = None;
        let mut candidates: Vec<usize> = index::sample(&mut self.rng, p, self.mtry).into_vec();
        candidates.sort_unstable();
        for f in candidates {
            self.scratch.clear();
            self.scratch
                .extend(rows.iter().map(|&i| (self.data.row(i)[f], self.data.labels()[i])));
            self.scratch.sort_by(|a, b| a.0.total_cmp(&b.0));
            let mut left_pos = 0.0;
            for k in 0..self.scratch.len() - 1 {
                if self.scratch[k].1 {
                    left_pos += 1.0;
                }
                let left_n = (k + 1) as f64;
                if k + 1 < min_leaf || rows.len() - k - 1 < min_leaf {
                    continue;
                }
                let (a, b) = (self.scratch[k].0, self.scratch[k + 1].0);
                if a == b {
                    continue;
                }
                let impurity = gini_sum(left_pos, left_n) + gini_sum(pos_total - left_pos, n - left_n);
                if best.map_or(true, |(_, _, g)| impurity < g) {
                    let mid = a + (b - a) / 2.0;
                    let threshold = if mid < b { mid } else { a };
                    best = Some((f, threshold, impurity));
                }
            }
        }
        match best {
            Some((f, t, g)) if g < parent - 1e-12 => Some((f, t)),
            _ => None,
        }
    }

    fn grow(&mut self, rows: &mut [usize], depth: usize) -> usize {
        let at = self.nodes.len();
        let pos = rows.iter().filter(|&&i| self.data.labels()[i]).count();
        let frac = pos as f64 / rows.len() as f64;
        self.nodes.push(Node::Leaf(frac));
        if depth >= self.params.max_depth || pos == 0 || pos == rows.len() || rows.len() < 2 * self.params.min_leaf.max(1)
        {
            return at;
        }
        let Some((feature, threshold)) = self.best_split(rows) else {
            return at;
        };
        let data = self.data;
        let mut split = 0;
        for k in 0..rows.len() {
            if data.row(rows[k])[feature] <= threshold {
                rows.swap(k, split);
                split += 1;
            }
        }
        let (l, r) = rows.split_at_mut(split);
        let left = self.grow(l, depth + 1);
        let right = self.grow(r, depth + 1);
        self.nodes[at] = Node::Split {
            feature,
            threshold,
            left,
            right,
        };
        at
    }
}

impl Forest {
    /// Unlike the other learners a single-class sample is accepted: every
    /// leaf is then pure and the forest predicts that class.
    pub fn train(data: &Dataset, params: &ForestParams, seed: u64) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::Empty("training set"));
        }
        let p = data.n_features();
        let mtry = params
            .features_per_split
            .unwrap_or_else(|| libm::floor(libm::sqrt(p as f64)) as usize)
            .clamp(1, p.max(1));
        let n = data.len();
        let mut trees = Vec::with_capacity(params.trees);
        for t in 0..params.trees {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, Stream::Forest, t as u64));
            let mut rows: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
            let mut b = Builder {
                data,
                params,
                mtry,
                rng,
                nodes: Vec::new(),
                scratch: Vec::with_capacity(n),
            };
            b.grow(&mut rows, 0);
            trees.push(Tree { nodes: b.nodes });
        }
        Ok(Forest { trees })
    }

    pub fn predict_proba(&self, z: &[f64]) -> f64 {
        if self.trees.is_empty() {
            return 0.5;
        }
        self.trees.iter().map(|t| t.predict(z)).sum::<f64>() / self.trees.len() as f64
    }
}
