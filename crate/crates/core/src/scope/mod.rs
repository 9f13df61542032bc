//! Backward-induction policy learning with regret-based value propagation.
//!
//! Stage learners are fit from the last decision point to the first. At the last
//! point the targets are the observed outcomes; earlier points regress the
//! propagated value `V_{k+1}`, where each case's value is corrected by the
//! estimated regret of its observed action: `V_k = V_{k+1} + Q(opt) - Q(obs)`.

pub mod toy;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::base_models::ModelSpec;
use crate::causal_learners::{fit_stage, LearnerKind, RaVariant, StageData, StageLearner};
use crate::error::{Error, Result};
use crate::event_log::{fit_schema_with, Dataset, DecisionPointSpec, EncodingMode, FeatureSchema, Prefix};
use crate::policy::{Direction, Policy};
use crate::rng::derive_seed;
use crate::simulators::SimCase;

pub const POLICY_FORMAT_VERSION: u32 = 1;

/// What earlier stages regress on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ValueTarget {
    /// Propagated regret-corrected values.
    Regret,
    /// The final outcome at every stage, without propagation.
    Final,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LearnerConfig {
    pub kind: LearnerKind,
    pub base: ModelSpec,
    /// Optional per-decision-point base models, overriding `base` where given.
    pub stage_bases: Vec<ModelSpec>,
    pub ra_variant: RaVariant,
    pub encoding: EncodingMode,
    pub max_seq_len: Option<usize>,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        LearnerConfig {
            kind: LearnerKind::S,
            base: ModelSpec::default(),
            stage_bases: Vec::new(),
            ra_variant: RaVariant::default(),
            encoding: EncodingMode::default(),
            max_seq_len: None,
        }
    }
}

impl LearnerConfig {
    pub fn new(kind: LearnerKind, base: ModelSpec) -> Self {
        LearnerConfig { kind, base, ..Default::default() }
    }

    pub fn base_for(&self, k: usize) -> &ModelSpec {
        self.stage_bases.get(k - 1).unwrap_or(&self.base)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainedPolicy {
    pub format_version: u32,
    pub target: ValueTarget,
    pub direction: Direction,
    pub encoding: EncodingMode,
    pub schema: FeatureSchema,
    pub specs: Vec<DecisionPointSpec>,
    /// `learners[k - 1]` serves decision point `k`.
    pub learners: Vec<StageLearner>,
}

/// Propagated values per decision point and case; `values[K]` holds the outcomes.
/// `None` marks a case that never reached the decision point.
#[derive(Clone, Debug, PartialEq)]
pub struct ValueTable {
    pub values: Vec<Vec<Option<f64>>>,
}

impl ValueTable {
    /// `V_k` of `case`, with `k` in `1..=K+1`.
    pub fn get(&self, k: usize, case: usize) -> Option<f64> {
        self.values[k - 1][case]
    }
}

/// Trains a policy with regret-based value propagation.
pub fn train(dataset: &Dataset, config: &LearnerConfig, direction: Direction, seed: u64) -> Result<TrainedPolicy> {
    Ok(train_with_values(dataset, config, direction, ValueTarget::Regret, seed)?.0)
}

pub fn train_with_values(
    dataset: &Dataset,
    config: &LearnerConfig,
    direction: Direction,
    target: ValueTarget,
    seed: u64,
) -> Result<(TrainedPolicy, ValueTable)> {
    let specs = dataset.specs();
    let n_k = specs.len();
    let schema = fit_schema_with(dataset, config.max_seq_len)?;
    let outcomes = dataset.outcomes();
    let mut table = vec![vec![None; outcomes.len()]; n_k + 1];
    table[n_k] = outcomes.iter().map(|&y| Some(y)).collect();
    let mut learners = Vec::with_capacity(n_k);

    for k in (1..=n_k).rev() {
        let spec = &specs[k - 1];
        let samples: Vec<_> = dataset.samples_at(k).collect();
        let features: Vec<Vec<f64>> =
            samples.par_iter().map(|s| schema.encode_vector(dataset.prefix(s), config.encoding)).collect();
        let actions: Vec<usize> = samples.iter().map(|s| s.action).collect();
        let targets: Vec<f64> = samples
            .iter()
            .map(|s| match target {
                // A case that stops before k+1 carries its outcome.
                ValueTarget::Regret => table[k][s.case].unwrap_or(s.outcome),
                ValueTarget::Final => s.outcome,
            })
            .collect();
        let data = StageData { k, features: &features, actions: &actions, targets: &targets, n_actions: spec.n_actions() };
        let learner = fit_stage(
            config.kind,
            config.ra_variant,
            &data,
            config.base_for(k),
            derive_seed(seed, "stage", &[k as u64]),
        )
        .map_err(|e| match e {
            Error::Positivity { k, action } => {
                let label = action.parse::<usize>().ok().and_then(|i| spec.actions.get(i)).cloned().unwrap_or(action);
                Error::Positivity { k, action: label }
            }
            other => other,
        })?;

        let updated: Vec<f64> = (0..samples.len())
            .into_par_iter()
            .map(|i| {
                let q = learner.q_values(&features[i])?;
                let (_, q_opt) = learner.best_from(&features[i], &q, direction)?;
                Ok(targets[i] + (q_opt - q[actions[i]]))
            })
            .collect::<Result<_>>()?;
        for (s, v) in samples.iter().zip(&updated) {
            if !v.is_finite() {
                return Err(Error::NonFiniteValue { k });
            }
            // With final-outcome targets nothing is propagated; keep the outcome.
            table[k - 1][s.case] = Some(match target {
                ValueTarget::Regret => *v,
                ValueTarget::Final => s.outcome,
            });
        }
        learners.push(learner);
    }
    learners.reverse();
    let policy = TrainedPolicy {
        format_version: POLICY_FORMAT_VERSION,
        target,
        direction,
        encoding: config.encoding,
        schema,
        specs: specs.to_vec(),
        learners,
    };
    Ok((policy, ValueTable { values: table }))
}

impl TrainedPolicy {
    pub fn n_decision_points(&self) -> usize {
        self.learners.len()
    }

    pub fn kind(&self) -> LearnerKind {
        self.learners[0].kind()
    }

    fn features(&self, prefix: Prefix<'_>, k: usize) -> Result<Vec<f64>> {
        let spec = self
            .specs
            .get(k.wrapping_sub(1))
            .ok_or_else(|| Error::InvalidSpec(format!("no decision point {k}")))?;
        if prefix.len() != spec.prefix_len {
            return Err(Error::PrefixLength { k, expected: spec.prefix_len, actual: prefix.len() });
        }
        Ok(self.schema.encode_vector(prefix, self.encoding))
    }

    /// Estimated optimal action at decision point `k`; the prefix must have length `l_k`.
    pub fn recommend(&self, prefix: Prefix<'_>, k: usize) -> Result<usize> {
        let x = self.features(prefix, k)?;
        Ok(self.learners[k - 1].best_action(&x, self.direction)?.0)
    }

    pub fn q_values(&self, prefix: Prefix<'_>, k: usize) -> Result<Vec<f64>> {
        let x = self.features(prefix, k)?;
        self.learners[k - 1].q_values(&x)
    }
}

impl Policy for TrainedPolicy {
    fn act(&self, _case: &SimCase, prefix: Prefix<'_>, k: usize) -> Result<usize> {
        self.recommend(prefix, k)
    }
}

#[cfg(test)]
mod tests {
    use super::toy::{ToyProcess, ToyState};
    use super::*;
    use crate::base_models::RidgeParams;
    use crate::event_log::{build_dataset, Event, EventLog, Trace};

    fn tabular(kind: LearnerKind) -> LearnerConfig {
        LearnerConfig::new(kind, ModelSpec::Tabular)
    }

    fn recommend(policy: &TrainedPolicy, toy: &ToyProcess, st: &ToyState) -> usize {
        let ev = toy.prefix_events("q", st);
        policy.recommend(Prefix::new(&ev), st.k()).unwrap()
    }

    #[test]
    fn recovers_dp_optimum_on_toy() {
        for dir in [Direction::Maximize, Direction::Minimize] {
            let mut toy = ToyProcess::two_step();
            toy.direction = dir;
            let ds = toy.dataset(|s, seq| 1 + (s + seq[0] * 2 + seq[1]) % 3).unwrap();
            for kind in [LearnerKind::S, LearnerKind::T] {
                let policy = train(&ds, &tabular(kind), dir, 0).unwrap();
                for k in 1..=2 {
                    for st in toy.states(k) {
                        assert_eq!(recommend(&policy, &toy, &st), toy.optimal_action(&st), "{kind} {dir:?} {st:?}");
                    }
                }
            }
        }
    }

    #[test]
    fn optimal_observed_actions_keep_outcome() {
        let toy = ToyProcess::two_step();
        let ds = toy.dataset(|_, _| 2).unwrap();
        let (_, table) = train_with_values(&ds, &tabular(LearnerKind::S), Direction::Maximize, ValueTarget::Regret, 0).unwrap();
        for (c, trace) in ds.log().traces.iter().enumerate() {
            let _ = trace;
            let (s, seq) = &toy.all_sequences()[c / 2];
            let (best, y) = toy.brute_force_best(*s);
            if *seq == best {
                assert_eq!(table.get(1, c), Some(y));
                assert_eq!(ds.outcomes()[c], y);
            }
            // Every value moves toward the optimum.
            assert!(table.get(1, c).unwrap() >= ds.outcomes()[c]);
        }
    }

    #[test]
    fn single_stage_equals_final_target() {
        let toy = ToyProcess::new(2, vec![3], vec![1.0, 4.0, 2.0, 0.5, 0.5, 3.0], Direction::Maximize).unwrap();
        let ds = toy.dataset(|_, _| 1).unwrap();
        let cfg = LearnerConfig::new(LearnerKind::S, ModelSpec::default());
        let a = train_with_values(&ds, &cfg, Direction::Maximize, ValueTarget::Regret, 9).unwrap().0;
        let b = train_with_values(&ds, &cfg, Direction::Maximize, ValueTarget::Final, 9).unwrap().0;
        assert_eq!(a.learners, b.learners);
    }

    #[test]
    fn constant_outcomes_recommend_first_action() {
        let toy = ToyProcess::new(2, vec![2], vec![5.0; 4], Direction::Maximize).unwrap();
        let ds = toy.dataset(|_, _| 3).unwrap();
        let cfg = LearnerConfig::new(LearnerKind::S, ModelSpec::Ridge(RidgeParams::default()));
        let policy = train(&ds, &cfg, Direction::Maximize, 0).unwrap();
        for st in toy.states(1) {
            assert_eq!(recommend(&policy, &toy, &st), 0);
        }
    }

    #[test]
    fn prefix_length_is_checked() {
        let toy = ToyProcess::two_step();
        let ds = toy.dataset(|_, _| 1).unwrap();
        let policy = train(&ds, &tabular(LearnerKind::S), Direction::Maximize, 0).unwrap();
        let ev = toy.prefix_events("q", &ToyState { initial: 0, history: vec![1] });
        assert!(matches!(policy.recommend(Prefix::new(&ev), 1), Err(Error::PrefixLength { k: 1, expected: 1, actual: 2 })));
        // Only the first l_k events matter.
        assert_eq!(policy.recommend(Prefix::new(&ev[..1]), 1).unwrap(), recommend(&policy, &toy, &ToyState { initial: 0, history: vec![] }));
    }

    #[test]
    fn ra_learner_trains_and_serialises() {
        let toy = ToyProcess::two_step();
        let ds = toy.dataset(|s, seq| 1 + (s + seq[1]) % 2).unwrap();
        let policy = train(&ds, &tabular(LearnerKind::Ra), Direction::Maximize, 0).unwrap();
        let json = serde_json::to_string(&policy).unwrap();
        let back: TrainedPolicy = serde_json::from_str(&json).unwrap();
        assert_eq!(back, policy);
        assert_eq!(back.kind(), LearnerKind::Ra);
    }

    #[test]
    fn positivity_error_names_label() {
        let toy = ToyProcess::two_step();
        let ds = toy.dataset(|_, seq| usize::from(seq[1] == 0)).unwrap();
        let err = train(&ds, &tabular(LearnerKind::T), Direction::Maximize, 0).unwrap_err();
        assert!(matches!(err, Error::Positivity { k: 2, ref action } if action == "d2_a1"), "{err}");
    }

    #[test]
    fn short_cases_carry_outcome() {
        // Second case ends before the second decision point.
        let mk = |id: &str, acts: &[&str], y: f64| {
            let mut ev = vec![Event::new(id, "start", 0.0)];
            for (i, a) in acts.iter().enumerate() {
                ev.push(Event::new(id, *a, i as f64 + 1.0));
            }
            let last = ev.pop().unwrap().with_attr("y", crate::event_log::Value::Num(y));
            ev.push(last);
            Trace::new(id, ev).unwrap()
        };
        let log = EventLog::new(vec![
            mk("a", &["d1_a0", "d2_a1", "end"], 1.0),
            mk("b", &["d1_a1"], 4.0),
            mk("c", &["d1_a1", "d2_a0", "end"], 2.0),
        ]);
        let specs = ToyProcess::two_step().specs();
        let ds = build_dataset(&log, &specs, ToyProcess::trace_outcome).unwrap();
        let (_, table) = train_with_values(&ds, &tabular(LearnerKind::S), Direction::Maximize, ValueTarget::Regret, 0).unwrap();
        assert_eq!(table.get(2, 1), None);
        assert!(table.get(1, 1).is_some());
    }
}
