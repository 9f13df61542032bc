//! Policy evaluation by simulator rollouts, the gain metric, random-search
//! tuning and the experiment sweep.

pub mod artifact;
pub mod report;
pub mod sweep;

use rand::seq::IndexedRandom;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::base_models::ModelSpec;
use crate::baselines::KMeansQParams;
use crate::config::SearchSpace;
use crate::error::{Error, Result};
use crate::policy::{Direction, Policy};
use crate::simulators::{SimCase, Simulator};

pub use artifact::PolicyArtifact;
pub use report::{write_reports, Aggregate, Failure, Row, SweepReport};
pub use sweep::{Cell, Experiment};

/// KPI of one forward rollout per case, in case order.
pub fn rollout_kpis(sim: &Simulator, policy: &dyn Policy, cases: &[SimCase]) -> Result<Vec<f64>> {
    cases.par_iter().map(|c| Ok(sim.play(c, policy)?.2)).collect()
}

/// Total KPI of `policy` over `cases`, summed in case order.
pub fn evaluate_policy(sim: &Simulator, policy: &dyn Policy, cases: &[SimCase]) -> Result<f64> {
    Ok(rollout_kpis(sim, policy, cases)?.iter().sum())
}

/// Percentage improvement of `policy_total` over `bank_total`.
pub fn gain(policy_total: f64, bank_total: f64, direction: Direction) -> Result<f64> {
    if bank_total == 0.0 {
        return Err(Error::ZeroBaseline);
    }
    let diff = match direction {
        Direction::Maximize => policy_total - bank_total,
        Direction::Minimize => bank_total - policy_total,
    };
    Ok(100.0 * diff / bank_total.abs())
}

/// Mean and standard error (sample standard deviation over the square root of n).
/// A single value has standard error 0.
pub fn mean_std_err(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// One evaluated configuration of a random search.
#[derive(Clone, Debug, PartialEq)]
pub struct Trial<C> {
    pub config: C,
    pub score: f64,
}

/// Index of the best score; ties go to the earliest trial.
pub fn best_trial(scores: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, s) in scores.iter().enumerate() {
        if s.is_finite() && best.is_none_or(|b| *s > scores[b]) {
            best = Some(i);
        }
    }
    best
}

/// Seeded random search maximising `score`. Trials that fail are skipped; the
/// search fails only if every trial does.
pub fn tune<C, S, F>(n_trials: usize, rng: &mut ChaCha8Rng, mut sample: S, score: F) -> Result<(C, Vec<Trial<C>>)>
where
    C: Clone,
    S: FnMut(&mut ChaCha8Rng) -> C,
    F: Fn(&C) -> Result<f64>,
{
    if n_trials == 0 {
        return Err(Error::Hyperparameter("n_trials must be at least 1".into()));
    }
    let configs: Vec<C> = (0..n_trials).map(|_| sample(rng)).collect();
    let mut trials = Vec::with_capacity(n_trials);
    let mut last_err = None;
    for c in configs {
        match score(&c) {
            Ok(s) => trials.push(Trial { config: c, score: s }),
            Err(e) => {
                last_err = Some(e);
                trials.push(Trial { config: c, score: f64::NAN });
            }
        }
    }
    let scores: Vec<f64> = trials.iter().map(|t| t.score).collect();
    match best_trial(&scores) {
        Some(i) => Ok((trials[i].config.clone(), trials)),
        None => Err(last_err.unwrap_or_else(|| Error::Hyperparameter("no finite trial score".into()))),
    }
}

fn pick<T: Clone>(values: &[T], rng: &mut ChaCha8Rng, current: &mut T) {
    if let Some(v) = values.choose(rng) {
        *current = v.clone();
    }
}

/// Draws a base model from `space`, starting from `base` (or a drawn candidate).
pub fn sample_model(space: &SearchSpace, base: &ModelSpec, rng: &mut ChaCha8Rng) -> ModelSpec {
    let mut spec = space.models.choose(rng).cloned().unwrap_or_else(|| base.clone());
    match &mut spec {
        ModelSpec::Boosted(p) => {
            pick(&space.n_rounds, rng, &mut p.n_rounds);
            pick(&space.max_depth, rng, &mut p.max_depth);
            pick(&space.learning_rate, rng, &mut p.learning_rate);
            pick(&space.min_samples_leaf, rng, &mut p.min_samples_leaf);
        }
        ModelSpec::Bagged(p) => {
            pick(&space.n_trees, rng, &mut p.n_trees);
            pick(&space.max_depth, rng, &mut p.max_depth);
            pick(&space.min_samples_leaf, rng, &mut p.min_samples_leaf);
            pick(&space.max_features, rng, &mut p.max_features);
        }
        ModelSpec::Mlp(p) => {
            pick(&space.hidden, rng, &mut p.hidden);
            pick(&space.learning_rate, rng, &mut p.learning_rate);
            pick(&space.epochs, rng, &mut p.epochs);
        }
        ModelSpec::Ridge(p) => pick(&space.l2, rng, &mut p.l2),
        ModelSpec::Tabular => {}
    }
    spec
}

pub fn sample_kmeans_q(space: &SearchSpace, base: &KMeansQParams, rng: &mut ChaCha8Rng) -> KMeansQParams {
    let mut p = base.clone();
    pick(&space.n_clusters, rng, &mut p.n_clusters);
    pick(&space.alpha, rng, &mut p.alpha);
    pick(&space.epsilon, rng, &mut p.epsilon);
    p
}

/// Equal-weight combination of silhouette (mapped to [0, 1]) and the min-max
/// normalised validation reward, per trial.
pub fn kmeans_q_scores(silhouettes: &[f64], rewards: &[f64]) -> Vec<f64> {
    let finite = rewards.iter().copied().filter(|r| r.is_finite());
    let lo = finite.clone().fold(f64::INFINITY, f64::min);
    let hi = finite.fold(f64::NEG_INFINITY, f64::max);
    silhouettes
        .iter()
        .zip(rewards)
        .map(|(s, r)| {
            if !r.is_finite() {
                return f64::NAN;
            }
            let rn = if hi > lo { (r - lo) / (hi - lo) } else { 0.0 };
            0.5 * (s + 1.0) / 2.0 + 0.5 * rn
        })
        .collect()
}
