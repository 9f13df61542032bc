//! Comparison policies: separate per-point learners, random actions, offline
//! Q-learning on clustered prefixes, and the exhaustive per-case optimum.

pub mod kmeans;
pub mod kmeans_q;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::event_log::{Dataset, DecisionPointSpec, Prefix};
use crate::policy::{Direction, Policy};
use crate::rng;
use crate::scope::{train_with_values, LearnerConfig, TrainedPolicy, ValueTarget};
use crate::simulators::{SimCase, Simulator};

pub use kmeans::{silhouette, KMeansModel};
pub use kmeans_q::{q_learning, train_kmeans_q, value_iteration, KMeansQParams, KMeansQPolicy, MdpModel, Successor};

/// Independent learners per decision point, each regressing the final outcome.
pub fn train_sep(dataset: &Dataset, config: &LearnerConfig, direction: Direction, seed: u64) -> Result<TrainedPolicy> {
    Ok(train_with_values(dataset, config, direction, ValueTarget::Final, seed)?.0)
}

/// Uniform actions, reproducible per (seed, case id, decision point).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RandomPolicy {
    pub seed: u64,
    pub n_actions: Vec<usize>,
}

impl RandomPolicy {
    pub fn new(specs: &[DecisionPointSpec], seed: u64) -> Self {
        RandomPolicy { seed, n_actions: specs.iter().map(DecisionPointSpec::n_actions).collect() }
    }

    pub fn action(&self, case_id: &str, k: usize) -> usize {
        let mut r = rng::stream(self.seed, "random-policy", &[rng::fnv1a(case_id), k as u64]);
        r.random_range(0..self.n_actions[k - 1])
    }
}

impl Policy for RandomPolicy {
    fn act(&self, case: &SimCase, _prefix: Prefix<'_>, k: usize) -> Result<usize> {
        Ok(self.action(&case.id, k))
    }
}

/// Sum over cases of the best KPI over all action sequences.
pub fn upper_bound(sim: &Simulator, cases: &[SimCase], cap: u128) -> Result<f64> {
    use rayon::prelude::*;
    let best: Vec<f64> = cases.par_iter().map(|c| Ok(sim.best_outcome(c, cap)?.1)).collect::<Result<_>>()?;
    Ok(best.iter().sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::base_models::ModelSpec;
    use crate::causal_learners::LearnerKind;
    use crate::scope::toy::{ToyProcess, ToyState};
    use crate::simulators::{FileCallParams, SimConfig, SimulatorParams};

    #[test]
    fn sep_first_stage_averages_logged_continuation() {
        let toy = ToyProcess::marketing();
        let copies = |_: usize, seq: &[usize]| if seq[1] == 1 { 1 } else { 9 };
        let ds = toy.dataset(copies).unwrap();
        let cfg = LearnerConfig::new(LearnerKind::S, ModelSpec::Tabular);
        let sep = train_sep(&ds, &cfg, Direction::Maximize, 0).unwrap();
        let root = toy.prefix_events("q", &ToyState { initial: 0, history: vec![] });
        let q = sep.q_values(Prefix::new(&root), 1).unwrap();
        // Historical mix at k=2: 10% discount.
        let oracle: Vec<f64> = (0..2).map(|a1| (toy.outcome(0, &[a1, 1]) + 9.0 * toy.outcome(0, &[a1, 0])) / 10.0).collect();
        for a in 0..2 {
            assert!((q[a] - oracle[a]).abs() < 1e-9);
        }
        assert_eq!(sep.recommend(Prefix::new(&root), 1).unwrap(), 0);
        let scope = crate::scope::train(&ds, &cfg, Direction::Maximize, 0).unwrap();
        assert_eq!(scope.recommend(Prefix::new(&root), 1).unwrap(), 1);
    }

    #[test]
    fn random_policy_is_uniform_and_reproducible() {
        let toy = ToyProcess::marketing();
        let p = RandomPolicy::new(&toy.specs(), 17);
        let n = 10_000;
        let ones: usize = (0..n).map(|i| p.action(&format!("c{i}"), 1)).sum();
        let sd = (n as f64 * 0.25).sqrt();
        assert!((ones as f64 - n as f64 / 2.0).abs() < 3.0 * sd);
        assert_eq!(p.action("x", 2), p.action("x", 2));
        assert!((0..100).all(|i| p.action(&i.to_string(), 2) < 2));
    }

    #[test]
    fn upper_bound_single_case_is_best_of_four() {
        let sim = Simulator::new(SimConfig {
            n_decision_points: 2,
            delta: 0.9,
            seed: 1,
            params: SimulatorParams::FileCall(FileCallParams::default()),
        })
        .unwrap();
        let c = sim.case("t", &[], 0);
        let all = sim.enumerate_outcomes(&c, 4096).unwrap();
        let min = all.iter().map(|(_, v)| *v).fold(f64::INFINITY, f64::min);
        assert_eq!(upper_bound(&sim, &[c], 4096).unwrap(), min);
    }
}
