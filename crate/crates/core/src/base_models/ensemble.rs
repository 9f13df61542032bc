use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::tree::{BinnedMatrix, RegressionTree, TreeParams};
use super::{BaggedParams, BoostedParams};

/// Stage-wise least-squares gradient boosting.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradientBoosted {
    base: f64,
    learning_rate: f64,
    trees: Vec<RegressionTree>,
}

impl GradientBoosted {
    pub(crate) fn fit(params: &BoostedParams, x: &[Vec<f64>], y: &[f64], rng: &mut ChaCha8Rng) -> Self {
        let data = BinnedMatrix::new(x, params.max_bins);
        let n = y.len();
        let base = y.iter().sum::<f64>() / n as f64;
        let mut pred = vec![base; n];
        let mut residual = vec![0.0; n];
        let weights = vec![1.0; n];
        let tree_params = TreeParams {
            max_depth: params.max_depth,
            min_samples_leaf: params.min_samples_leaf as f64,
            feature_fraction: 1.0,
        };
        let mut trees = Vec::with_capacity(params.n_rounds);
        for _ in 0..params.n_rounds {
            for i in 0..n {
                residual[i] = y[i] - pred[i];
            }
            let tree = RegressionTree::fit(&data, &residual, &weights, (0..n as u32).collect(), tree_params, rng);
            for (p, row) in pred.iter_mut().zip(x) {
                *p += params.learning_rate * tree.predict(row);
            }
            trees.push(tree);
        }
        GradientBoosted { base, learning_rate: params.learning_rate, trees }
    }

    pub fn predict_row(&self, row: &[f64]) -> f64 {
        self.base + self.learning_rate * self.trees.iter().map(|t| t.predict(row)).sum::<f64>()
    }

    pub fn n_rounds(&self) -> usize {
        self.trees.len()
    }

    /// Mean squared error on `(x, y)` after 0, 1, ..., n_rounds trees.
    pub fn staged_mse(&self, x: &[Vec<f64>], y: &[f64]) -> Vec<f64> {
        let mut pred = vec![self.base; y.len()];
        let mse = |pred: &[f64]| pred.iter().zip(y).map(|(p, t)| (p - t).powi(2)).sum::<f64>() / y.len() as f64;
        let mut out = vec![mse(&pred)];
        for tree in &self.trees {
            for (p, row) in pred.iter_mut().zip(x) {
                *p += self.learning_rate * tree.predict(row);
            }
            out.push(mse(&pred));
        }
        out
    }
}

/// Bootstrap-aggregated trees with per-node feature subsampling.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaggedTrees {
    trees: Vec<RegressionTree>,
}

impl BaggedTrees {
    pub(crate) fn fit(params: &BaggedParams, x: &[Vec<f64>], y: &[f64], rng: &mut ChaCha8Rng) -> Self {
        let data = BinnedMatrix::new(x, params.max_bins);
        let n = y.len();
        let tree_params = TreeParams {
            max_depth: params.max_depth,
            min_samples_leaf: params.min_samples_leaf as f64,
            feature_fraction: params.max_features,
        };
        let mut trees = Vec::with_capacity(params.n_trees);
        let mut weights = vec![0.0; n];
        for _ in 0..params.n_trees {
            weights.iter_mut().for_each(|w| *w = 0.0);
            for _ in 0..n {
                weights[rng.random_range(0..n)] += 1.0;
            }
            let rows: Vec<u32> = (0..n as u32).filter(|&i| weights[i as usize] > 0.0).collect();
            trees.push(RegressionTree::fit(&data, y, &weights, rows, tree_params, rng));
        }
        BaggedTrees { trees }
    }

    pub fn predict_row(&self, row: &[f64]) -> f64 {
        self.trees.iter().map(|t| t.predict(row)).sum::<f64>() / self.trees.len() as f64
    }
}
