//! Pluggable regressors shared by every learner.
//!
//! All models minimise squared error. Fitting is deterministic given the seed,
//! and fitted models are immutable.

mod ensemble;
mod mlp;
mod ridge;
mod tabular;
mod tree;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use ensemble::{BaggedTrees, GradientBoosted};
pub use mlp::{grad_check, max_relative_error, Layer, Mlp, Network};
pub use ridge::Ridge;
pub use tabular::TabularMeans;
pub use tree::RegressionTree;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BoostedParams {
    pub n_rounds: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    pub min_samples_leaf: usize,
    pub max_bins: usize,
}

impl Default for BoostedParams {
    fn default() -> Self {
        BoostedParams { n_rounds: 100, max_depth: 4, learning_rate: 0.1, min_samples_leaf: 5, max_bins: 64 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BaggedParams {
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    /// Fraction of features tried at each split.
    pub max_features: f64,
    pub max_bins: usize,
}

impl Default for BaggedParams {
    fn default() -> Self {
        BaggedParams { n_trees: 50, max_depth: 8, min_samples_leaf: 3, max_features: 0.7, max_bins: 64 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MlpParams {
    pub hidden: Vec<usize>,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub bias: bool,
}

impl Default for MlpParams {
    fn default() -> Self {
        MlpParams { hidden: vec![32, 16], learning_rate: 1e-3, epochs: 30, batch_size: 64, bias: true }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RidgeParams {
    pub l2: f64,
}

impl Default for RidgeParams {
    fn default() -> Self {
        RidgeParams { l2: 1e-6 }
    }
}

/// Which regressor to fit and with what hyperparameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ModelSpec {
    Boosted(BoostedParams),
    Bagged(BaggedParams),
    Mlp(MlpParams),
    Ridge(RidgeParams),
    Tabular,
}

impl Default for ModelSpec {
    fn default() -> Self {
        ModelSpec::Boosted(BoostedParams::default())
    }
}

impl ModelSpec {
    pub fn name(&self) -> &'static str {
        match self {
            ModelSpec::Boosted(_) => "boosted",
            ModelSpec::Bagged(_) => "bagged",
            ModelSpec::Mlp(_) => "mlp",
            ModelSpec::Ridge(_) => "ridge",
            ModelSpec::Tabular => "tabular",
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Hyperparameter(m.to_string()));
        match self {
            ModelSpec::Boosted(p) => {
                if p.n_rounds == 0 || p.max_depth == 0 || p.min_samples_leaf == 0 || p.max_bins < 2 {
                    return bad("boosted: n_rounds, max_depth, min_samples_leaf must be positive, max_bins >= 2");
                }
                if !(p.learning_rate > 0.0 && p.learning_rate <= 1.0) {
                    return bad("boosted: learning_rate must be in (0, 1]");
                }
            }
            ModelSpec::Bagged(p) => {
                if p.n_trees == 0 || p.max_depth == 0 || p.min_samples_leaf == 0 || p.max_bins < 2 {
                    return bad("bagged: n_trees, max_depth, min_samples_leaf must be positive, max_bins >= 2");
                }
                if !(p.max_features > 0.0 && p.max_features <= 1.0) {
                    return bad("bagged: max_features must be in (0, 1]");
                }
            }
            ModelSpec::Mlp(p) => {
                if p.hidden.contains(&0) || p.epochs == 0 || p.batch_size == 0 || !(p.learning_rate > 0.0) {
                    return bad("mlp: hidden sizes, epochs, batch_size and learning_rate must be positive");
                }
            }
            ModelSpec::Ridge(p) => {
                if !(p.l2 >= 0.0) {
                    return bad("ridge: l2 must be non-negative");
                }
            }
            ModelSpec::Tabular => {}
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum FittedModel {
    Boosted { n_features: usize, model: GradientBoosted },
    Bagged { n_features: usize, model: BaggedTrees },
    Mlp { n_features: usize, model: Mlp },
    Ridge { n_features: usize, model: Ridge },
    Tabular { n_features: usize, model: TabularMeans },
}

fn check_matrix(x: &[Vec<f64>]) -> Result<usize> {
    let width = x.first().ok_or_else(|| Error::Empty("no training rows".into()))?.len();
    for row in x {
        if row.len() != width {
            return Err(Error::WidthMismatch { expected: width, actual: row.len() });
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("feature matrix".into()));
        }
    }
    Ok(width)
}

/// Fits a regressor. `x` and `y` must be non-empty, equally long and finite.
pub fn fit(spec: &ModelSpec, x: &[Vec<f64>], y: &[f64], seed: u64) -> Result<FittedModel> {
    spec.validate()?;
    let n_features = check_matrix(x)?;
    if x.len() != y.len() {
        return Err(Error::Empty(format!("{} rows but {} targets", x.len(), y.len())));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("targets".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(match spec {
        ModelSpec::Boosted(p) => FittedModel::Boosted { n_features, model: GradientBoosted::fit(p, x, y, &mut rng) },
        ModelSpec::Bagged(p) => FittedModel::Bagged { n_features, model: BaggedTrees::fit(p, x, y, &mut rng) },
        ModelSpec::Mlp(p) => FittedModel::Mlp { n_features, model: Mlp::fit(p, x, y, &mut rng) },
        ModelSpec::Ridge(p) => FittedModel::Ridge { n_features, model: Ridge::fit(p.l2, x, y) },
        ModelSpec::Tabular => FittedModel::Tabular { n_features, model: TabularMeans::fit(x, y) },
    })
}

impl FittedModel {
    pub fn n_features(&self) -> usize {
        match self {
            FittedModel::Boosted { n_features, .. }
            | FittedModel::Bagged { n_features, .. }
            | FittedModel::Mlp { n_features, .. }
            | FittedModel::Ridge { n_features, .. }
            | FittedModel::Tabular { n_features, .. } => *n_features,
        }
    }

    pub fn predict_row(&self, row: &[f64]) -> Result<f64> {
        if row.len() != self.n_features() {
            return Err(Error::WidthMismatch { expected: self.n_features(), actual: row.len() });
        }
        Ok(match self {
            FittedModel::Boosted { model, .. } => model.predict_row(row),
            FittedModel::Bagged { model, .. } => model.predict_row(row),
            FittedModel::Mlp { model, .. } => model.predict_row(row),
            FittedModel::Ridge { model, .. } => model.predict_row(row),
            FittedModel::Tabular { model, .. } => model.predict_row(row),
        })
    }

    pub fn predict(&self, x: &[Vec<f64>]) -> Result<Vec<f64>> {
        x.iter().map(|r| self.predict_row(r)).collect()
    }
}
