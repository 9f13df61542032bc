//! Experiment configuration, read from TOML.
//!
//! Unknown keys are rejected everywhere. [`validate`] collects every problem
//! instead of stopping at the first one.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::base_models::{BoostedParams, ModelSpec};
use crate::baselines::KMeansQParams;
use crate::causal_learners::{LearnerKind, RaVariant};
use crate::error::{Error, Result};
use crate::event_log::EncodingMode;
use crate::scope::LearnerConfig;
use crate::simulators::{SimulatorParams, DEFAULT_COMBINATORIAL_CAP};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Method {
    Scope(LearnerKind),
    Sep(LearnerKind),
    KMeansQ,
    Random,
    Bank,
    UpperBound,
}

impl Method {
    pub const ALL: [Method; 10] = [
        Method::Scope(LearnerKind::S),
        Method::Scope(LearnerKind::T),
        Method::Scope(LearnerKind::Ra),
        Method::Sep(LearnerKind::S),
        Method::Sep(LearnerKind::T),
        Method::Sep(LearnerKind::Ra),
        Method::KMeansQ,
        Method::Random,
        Method::Bank,
        Method::UpperBound,
    ];

    pub fn learner(self) -> Option<LearnerKind> {
        match self {
            Method::Scope(k) | Method::Sep(k) => Some(k),
            _ => None,
        }
    }

    pub fn is_trained(self) -> bool {
        matches!(self, Method::Scope(_) | Method::Sep(_) | Method::KMeansQ)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::Scope(k) => write!(f, "scope-{k}"),
            Method::Sep(k) => write!(f, "sep-{k}"),
            Method::KMeansQ => f.write_str("kmeans-q"),
            Method::Random => f.write_str("random"),
            Method::Bank => f.write_str("bank"),
            Method::UpperBound => f.write_str("upper-bound"),
        }
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.to_string() == s)
            .ok_or_else(|| Error::Config(format!("unknown method '{s}'")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Axes {
    pub delta: Vec<f64>,
    pub n_train: Vec<usize>,
    pub n_decision_points: Vec<usize>,
}

impl Default for Axes {
    fn default() -> Self {
        Axes { delta: vec![0.9, 0.95, 0.99], n_train: vec![10_000], n_decision_points: vec![2, 3, 4] }
    }
}

/// Learner settings shared by every SCOPE and SEP method; the learner kind comes from the method.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LearnerSettings {
    pub base: ModelSpec,
    pub stage_bases: Vec<ModelSpec>,
    pub ra_variant: RaVariant,
    pub encoding: EncodingMode,
    pub max_seq_len: Option<usize>,
}

impl Default for LearnerSettings {
    fn default() -> Self {
        let d = LearnerConfig::default();
        LearnerSettings {
            base: d.base,
            stage_bases: d.stage_bases,
            ra_variant: d.ra_variant,
            encoding: d.encoding,
            max_seq_len: d.max_seq_len,
        }
    }
}

impl LearnerSettings {
    pub fn learner_config(&self, kind: LearnerKind) -> LearnerConfig {
        LearnerConfig {
            kind,
            base: self.base.clone(),
            stage_bases: self.stage_bases.clone(),
            ra_variant: self.ra_variant,
            encoding: self.encoding,
            max_seq_len: self.max_seq_len,
        }
    }
}

/// Candidate values per hyperparameter. An empty list keeps the configured value.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SearchSpace {
    /// Candidate base models; each trial draws one, then perturbs it with the lists below.
    pub models: Vec<ModelSpec>,
    pub n_rounds: Vec<usize>,
    pub max_depth: Vec<usize>,
    pub learning_rate: Vec<f64>,
    pub min_samples_leaf: Vec<usize>,
    pub n_trees: Vec<usize>,
    pub max_features: Vec<f64>,
    pub hidden: Vec<Vec<usize>>,
    pub epochs: Vec<usize>,
    pub l2: Vec<f64>,
    pub n_clusters: Vec<usize>,
    pub alpha: Vec<f64>,
    pub epsilon: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TuningConfig {
    /// Random-search trials per trained method; 0 disables tuning.
    pub n_trials: usize,
    pub validation_fraction: f64,
    pub space: SearchSpace,
}

impl Default for TuningConfig {
    fn default() -> Self {
        TuningConfig { n_trials: 0, validation_fraction: 0.2, space: SearchSpace::default() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    /// Master seed; every random stream is derived from it.
    pub seed: u64,
    pub out_dir: String,
    pub n_seeds: usize,
    pub test_cases: usize,
    pub upper_bound_cap: u64,
    pub methods: Vec<String>,
    pub simulator: SimulatorParams,
    pub axes: Axes,
    pub learner: LearnerSettings,
    pub kmeans_q: KMeansQParams,
    pub tuning: TuningConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 0,
            out_dir: "results".into(),
            n_seeds: 10,
            test_cases: 1000,
            upper_bound_cap: DEFAULT_COMBINATORIAL_CAP as u64,
            methods: ["scope-s", "sep-s", "kmeans-q", "random", "bank", "upper-bound"].map(String::from).to_vec(),
            simulator: SimulatorParams::default(),
            axes: Axes::default(),
            learner: LearnerSettings::default(),
            kmeans_q: KMeansQParams::default(),
            tuning: TuningConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Parsed method list; fails on the first unknown name.
    pub fn parsed_methods(&self) -> Result<Vec<Method>> {
        self.methods.iter().map(|m| m.parse()).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Diagnostic {
    pub severity: Severity,
    /// Dotted config key the diagnostic refers to.
    pub key: String,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sev = match self.severity {
            Severity::Error => "error",
            Severity::Warning => "warning",
        };
        write!(f, "{sev}: {}: {}", self.key, self.message)
    }
}

fn model_errors(spec: &ModelSpec, key: &str, out: &mut Vec<Diagnostic>) {
    if let Err(e) = spec.validate() {
        out.push(Diagnostic { severity: Severity::Error, key: key.into(), message: e.to_string() });
    }
}

/// Every error and warning in `config`; an empty list means it is runnable.
pub fn validate(config: &ExperimentConfig) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    let mut err = |key: &str, message: String| out.push(Diagnostic { severity: Severity::Error, key: key.into(), message });
    if config.n_seeds == 0 {
        err("n_seeds", "must be at least 1".into());
    }
    if config.test_cases == 0 {
        err("test_cases", "must be at least 1".into());
    }
    if config.methods.is_empty() {
        err("methods", "no methods configured".into());
    }
    for m in &config.methods {
        if m.parse::<Method>().is_err() {
            err("methods", format!("unknown method '{m}'"));
        }
    }
    if config.axes.delta.is_empty() {
        err("axes.delta", "empty axis".into());
    }
    for d in &config.axes.delta {
        if !(0.0..=1.0).contains(d) {
            err("axes.delta", format!("delta {d} outside [0, 1]"));
        }
    }
    if config.axes.n_train.is_empty() {
        err("axes.n_train", "empty axis".into());
    }
    if config.axes.n_train.contains(&0) {
        err("axes.n_train", "training set size must be positive".into());
    }
    if config.axes.n_decision_points.is_empty() {
        err("axes.n_decision_points", "empty axis".into());
    }
    if !(config.tuning.validation_fraction > 0.0 && config.tuning.validation_fraction < 1.0) {
        err("tuning.validation_fraction", "must be in (0, 1)".into());
    }
    if let Err(e) = config.kmeans_q.validate() {
        err("kmeans_q", e.to_string());
    }
    let mut model_diags = Vec::new();
    model_errors(&config.learner.base, "learner.base", &mut model_diags);
    for (i, s) in config.learner.stage_bases.iter().enumerate() {
        model_errors(s, &format!("learner.stage_bases[{i}]"), &mut model_diags);
    }
    out.extend(model_diags);

    for &k in &config.axes.n_decision_points {
        match &config.simulator {
            SimulatorParams::FileCall(p) => {
                if k == 0 {
                    out.push(Diagnostic {
                        severity: Severity::Error,
                        key: "axes.n_decision_points".into(),
                        message: "must be at least 1".into(),
                    });
                } else if k > 6 {
                    let n = 2u128.saturating_pow(k as u32);
                    out.push(Diagnostic {
                        severity: Severity::Warning,
                        key: "axes.n_decision_points".into(),
                        message: format!(
                            "K={k} is outside the simulator's 2..=6 range; the upper bound enumerates 2^{k} = {n} sequences per case"
                        ),
                    });
                } else if let Err(e) = p.validate(k) {
                    out.push(Diagnostic { severity: Severity::Error, key: "simulator".into(), message: e.to_string() });
                }
            }
            SimulatorParams::LoanProc(p) => {
                if let Err(e) = p.validate(k) {
                    out.push(Diagnostic {
                        severity: Severity::Error,
                        key: "axes.n_decision_points".into(),
                        message: e.to_string(),
                    });
                }
            }
        }
    }
    let sizes_ok = config.tuning.n_trials == 0 || !space_is_empty(&config.tuning.space);
    if !sizes_ok {
        out.push(Diagnostic {
            severity: Severity::Error,
            key: "tuning.space".into(),
            message: "tuning enabled but the search space is empty".into(),
        });
    }
    out
}

pub fn space_is_empty(s: &SearchSpace) -> bool {
    s.models.is_empty()
        && s.n_rounds.is_empty()
        && s.max_depth.is_empty()
        && s.learning_rate.is_empty()
        && s.min_samples_leaf.is_empty()
        && s.n_trees.is_empty()
        && s.max_features.is_empty()
        && s.hidden.is_empty()
        && s.epochs.is_empty()
        && s.l2.is_empty()
        && s.n_clusters.is_empty()
        && s.alpha.is_empty()
        && s.epsilon.is_empty()
}

pub fn has_errors(diags: &[Diagnostic]) -> bool {
    diags.iter().any(|d| d.severity == Severity::Error)
}

/// Example configuration with every section spelled out.
pub fn example() -> ExperimentConfig {
    ExperimentConfig {
        seed: 7,
        n_seeds: 3,
        test_cases: 200,
        axes: Axes { delta: vec![0.9, 0.99], n_train: vec![1000], n_decision_points: vec![2, 3] },
        learner: LearnerSettings {
            base: ModelSpec::Boosted(BoostedParams { n_rounds: 60, ..Default::default() }),
            ..Default::default()
        },
        kmeans_q: KMeansQParams { episodes: 5000, ..Default::default() },
        ..Default::default()
    }
}
