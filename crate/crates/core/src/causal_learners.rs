//! Per-decision-point causal learners.
//!
//! A stage learner maps an encoded prefix to one Q-value per action. The S-learner
//! appends a one-hot action to the features, the T-learner fits one model per
//! action, and the RA-learner adds a second stage regressing pseudo-outcomes.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::base_models::{fit, FittedModel, ModelSpec};
use crate::error::{Error, Result};
use crate::policy::Direction;
use crate::rng::derive_seed;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LearnerKind {
    S,
    T,
    Ra,
}

impl LearnerKind {
    pub fn name(self) -> &'static str {
        match self {
            LearnerKind::S => "s",
            LearnerKind::T => "t",
            LearnerKind::Ra => "ra",
        }
    }
}

impl fmt::Display for LearnerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LearnerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "s" => Ok(LearnerKind::S),
            "t" => Ok(LearnerKind::T),
            "ra" => Ok(LearnerKind::Ra),
            other => Err(Error::Config(format!("unknown learner kind '{other}'"))),
        }
    }
}

/// Which pseudo-outcome the RA-learner regresses in its second stage.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RaVariant {
    /// The pseudo-outcome exactly as published, including its unusual first term.
    #[default]
    AsPrinted,
    /// The textbook multi-action form: every term is an effect against the baseline.
    Classic,
}

/// Pseudo-outcome for action `a` against baseline `b`, given the observed action
/// and outcome and the stage-one Q-values of this sample.
pub fn pseudo_outcome(variant: RaVariant, a_obs: usize, y: f64, q: &[f64], a: usize, b: usize) -> f64 {
    match variant {
        RaVariant::AsPrinted => {
            if a_obs == a {
                y - q[a]
            } else {
                (q[a_obs] - y) + (q[a_obs] - q[b])
            }
        }
        RaVariant::Classic => {
            if a_obs == a {
                y - q[b]
            } else if a_obs == b {
                q[a] - y
            } else {
                q[a] - q[b]
            }
        }
    }
}

/// Training data for one decision point.
#[derive(Clone, Copy, Debug)]
pub struct StageData<'a> {
    /// 1-based decision point, used in error messages.
    pub k: usize,
    pub features: &'a [Vec<f64>],
    pub actions: &'a [usize],
    pub targets: &'a [f64],
    pub n_actions: usize,
}

impl StageData<'_> {
    fn check(&self) -> Result<()> {
        if self.features.is_empty() {
            return Err(Error::Empty(format!("no samples at decision point {}", self.k)));
        }
        if self.features.len() != self.actions.len() || self.features.len() != self.targets.len() {
            return Err(Error::Empty(format!("ragged stage data at decision point {}", self.k)));
        }
        if self.n_actions == 0 {
            return Err(Error::InvalidSpec(format!("empty action space at decision point {}", self.k)));
        }
        if let Some(a) = self.actions.iter().find(|&&a| a >= self.n_actions) {
            return Err(Error::UnknownAction { case: String::new(), k: self.k, action: a.to_string() });
        }
        Ok(())
    }

    fn positivity(&self) -> Result<()> {
        let mut seen = vec![false; self.n_actions];
        for &a in self.actions {
            seen[a] = true;
        }
        match seen.iter().position(|s| !s) {
            Some(action) => Err(Error::Positivity { k: self.k, action: action.to_string() }),
            None => Ok(()),
        }
    }
}

fn with_action(x: &[f64], a: usize, n_actions: usize) -> Vec<f64> {
    let mut row = Vec::with_capacity(x.len() + n_actions);
    row.extend_from_slice(x);
    row.extend((0..n_actions).map(|j| if j == a { 1.0 } else { 0.0 }));
    row
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum StageLearner {
    S {
        n_actions: usize,
        model: FittedModel,
    },
    T {
        models: Vec<FittedModel>,
    },
    Ra {
        n_actions: usize,
        stage1: FittedModel,
        /// Effect models for actions `1..n_actions`; action 0 is the baseline.
        effects: Vec<FittedModel>,
        variant: RaVariant,
    },
}

fn fit_s(data: &StageData<'_>, base: &ModelSpec, seed: u64) -> Result<FittedModel> {
    let x: Vec<Vec<f64>> =
        data.features.iter().zip(data.actions).map(|(r, &a)| with_action(r, a, data.n_actions)).collect();
    fit(base, &x, data.targets, seed)
}

fn s_q_values(model: &FittedModel, n_actions: usize, x: &[f64]) -> Result<Vec<f64>> {
    let mut row = with_action(x, 0, n_actions);
    let base = x.len();
    (0..n_actions)
        .map(|a| {
            row[base..].iter_mut().enumerate().for_each(|(j, v)| *v = if j == a { 1.0 } else { 0.0 });
            model.predict_row(&row)
        })
        .collect()
}

/// Fits one stage learner. T and RA require every action to be observed.
pub fn fit_stage(
    kind: LearnerKind,
    variant: RaVariant,
    data: &StageData<'_>,
    base: &ModelSpec,
    seed: u64,
) -> Result<StageLearner> {
    data.check()?;
    match kind {
        LearnerKind::S => {
            Ok(StageLearner::S { n_actions: data.n_actions, model: fit_s(data, base, derive_seed(seed, "s", &[]))? })
        }
        LearnerKind::T => {
            data.positivity()?;
            let models = (0..data.n_actions)
                .into_par_iter()
                .map(|a| {
                    let (x, y): (Vec<Vec<f64>>, Vec<f64>) = data
                        .features
                        .iter()
                        .zip(data.actions)
                        .zip(data.targets)
                        .filter(|((_, &obs), _)| obs == a)
                        .map(|((r, _), &t)| (r.clone(), t))
                        .unzip();
                    fit(base, &x, &y, derive_seed(seed, "t", &[a as u64]))
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(StageLearner::T { models })
        }
        LearnerKind::Ra => {
            data.positivity()?;
            let n_actions = data.n_actions;
            let stage1 = fit_s(data, base, derive_seed(seed, "s", &[]))?;
            let q: Vec<Vec<f64>> =
                data.features.iter().map(|r| s_q_values(&stage1, n_actions, r)).collect::<Result<_>>()?;
            let effects = (1..n_actions)
                .into_par_iter()
                .map(|a| {
                    let phi: Vec<f64> = (0..data.features.len())
                        .map(|i| pseudo_outcome(variant, data.actions[i], data.targets[i], &q[i], a, 0))
                        .collect();
                    if phi.iter().any(|v| !v.is_finite()) {
                        return Err(Error::NonFiniteValue { k: data.k });
                    }
                    fit(base, data.features, &phi, derive_seed(seed, "ra", &[a as u64]))
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(StageLearner::Ra { n_actions, stage1, effects, variant })
        }
    }
}

impl StageLearner {
    pub fn kind(&self) -> LearnerKind {
        match self {
            StageLearner::S { .. } => LearnerKind::S,
            StageLearner::T { .. } => LearnerKind::T,
            StageLearner::Ra { .. } => LearnerKind::Ra,
        }
    }

    pub fn n_actions(&self) -> usize {
        match self {
            StageLearner::S { n_actions, .. } | StageLearner::Ra { n_actions, .. } => *n_actions,
            StageLearner::T { models } => models.len(),
        }
    }

    /// One Q-value per action. For RA these are the stage-one values.
    pub fn q_values(&self, x: &[f64]) -> Result<Vec<f64>> {
        match self {
            StageLearner::S { n_actions, model } => s_q_values(model, *n_actions, x),
            StageLearner::T { models } => models.iter().map(|m| m.predict_row(x)).collect(),
            StageLearner::Ra { n_actions, stage1, .. } => s_q_values(stage1, *n_actions, x),
        }
    }

    /// Predicted effects against the baseline (entry 0 is always 0). `None` unless RA.
    pub fn effects(&self, x: &[f64]) -> Result<Option<Vec<f64>>> {
        match self {
            StageLearner::Ra { effects, .. } => {
                let mut out = vec![0.0];
                for m in effects {
                    out.push(m.predict_row(x)?);
                }
                Ok(Some(out))
            }
            _ => Ok(None),
        }
    }

    /// Recommended action and its Q-value; ties go to the lowest index.
    pub fn best_action(&self, x: &[f64], direction: Direction) -> Result<(usize, f64)> {
        let q = self.q_values(x)?;
        self.best_from(x, &q, direction)
    }

    /// As [`best_action`](Self::best_action) with precomputed Q-values.
    pub fn best_from(&self, x: &[f64], q: &[f64], direction: Direction) -> Result<(usize, f64)> {
        let a = match self.effects(x)? {
            Some(e) => direction.best_index(&e),
            None => direction.best_index(q),
        };
        Ok((a, q[a]))
    }
}
