//! Offline tabular Q-learning over clustered prefixes.
//!
//! A state is (cluster of the encoded prefix, last activity of the prefix). The
//! MDP is estimated by replaying the training log: the case outcome is the reward
//! of the terminal transition and intermediate rewards are 0.

use std::collections::BTreeMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::kmeans::{silhouette, KMeansModel};
use crate::error::{Error, Result};
use crate::event_log::{fit_schema, Dataset, EncodingMode, FeatureSchema, Prefix};
use crate::policy::{Direction, Policy};
use crate::rng;
use crate::simulators::SimCase;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KMeansQParams {
    pub n_clusters: usize,
    pub kmeans_iters: usize,
    pub alpha: f64,
    pub gamma: f64,
    pub epsilon: f64,
    pub episodes: usize,
    pub max_steps: usize,
}

impl Default for KMeansQParams {
    fn default() -> Self {
        KMeansQParams {
            n_clusters: 8,
            kmeans_iters: 50,
            alpha: 0.1,
            gamma: 1.0,
            epsilon: 0.2,
            episodes: 20_000,
            max_steps: 50,
        }
    }
}

impl KMeansQParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Hyperparameter(m.into()));
        if self.n_clusters < 1 {
            return bad("n_clusters must be at least 1");
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return bad("alpha must be in (0, 1]");
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return bad("gamma must be in [0, 1]");
        }
        if !(0.0..=1.0).contains(&self.epsilon) {
            return bad("epsilon must be in [0, 1]");
        }
        if self.max_steps < 1 {
            return bad("max_steps must be at least 1");
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Successor {
    /// `None` is the terminal state.
    pub next: Option<usize>,
    pub count: usize,
    pub mean_reward: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MdpModel {
    pub n_states: usize,
    pub n_actions: usize,
    /// `successors[s][a]`; empty when the pair was never observed.
    pub successors: Vec<Vec<Vec<Successor>>>,
    /// Starting state of every replayed case.
    pub initial: Vec<usize>,
}

/// One replayed transition `(state, action, reward, next)`.
pub type Transition = (usize, usize, f64, Option<usize>);

impl MdpModel {
    pub fn from_transitions(n_states: usize, n_actions: usize, transitions: &[Transition], initial: Vec<usize>) -> Result<Self> {
        if n_states == 0 || initial.is_empty() {
            return Err(Error::Empty("empty state space".into()));
        }
        let mut successors = vec![vec![Vec::<Successor>::new(); n_actions]; n_states];
        for &(s, a, r, next) in transitions {
            if !r.is_finite() {
                return Err(Error::NonFinite("reward".into()));
            }
            let list = &mut successors[s][a];
            match list.iter_mut().find(|x| x.next == next) {
                Some(x) => {
                    x.count += 1;
                    x.mean_reward += (r - x.mean_reward) / x.count as f64;
                }
                None => list.push(Successor { next, count: 1, mean_reward: r }),
            }
        }
        for row in &mut successors {
            for list in row {
                list.sort_by_key(|x| x.next.map_or(0, |n| n + 1));
            }
        }
        Ok(MdpModel { n_states, n_actions, successors, initial })
    }

    pub fn observed(&self, s: usize, a: usize) -> bool {
        !self.successors[s][a].is_empty()
    }

    pub fn count(&self, s: usize, a: usize) -> usize {
        self.successors[s][a].iter().map(|x| x.count).sum()
    }

    /// Average reward of the pair over all its replayed transitions.
    pub fn average_reward(&self, s: usize, a: usize) -> Option<f64> {
        let n = self.count(s, a);
        (n > 0).then(|| self.successors[s][a].iter().map(|x| x.mean_reward * x.count as f64).sum::<f64>() / n as f64)
    }

    /// Transition probabilities of an observed pair, in successor order.
    pub fn probabilities(&self, s: usize, a: usize) -> Vec<f64> {
        let n = self.count(s, a) as f64;
        self.successors[s][a].iter().map(|x| x.count as f64 / n).collect()
    }
}

fn best_observed(q: &[Option<f64>]) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for (a, v) in q.iter().enumerate() {
        if let Some(v) = v {
            if best.is_none_or(|(_, b)| *v > b) {
                best = Some((a, *v));
            }
        }
    }
    best
}

fn state_value(q: &[Vec<Option<f64>>], next: Option<usize>) -> f64 {
    next.and_then(|s| best_observed(&q[s])).map_or(0.0, |(_, v)| v)
}

/// Optimal Q on the estimated model; `None` for unobserved pairs.
pub fn value_iteration(mdp: &MdpModel, gamma: f64, tol: f64, max_iter: usize) -> Vec<Vec<Option<f64>>> {
    let mut q: Vec<Vec<Option<f64>>> = (0..mdp.n_states)
        .map(|s| (0..mdp.n_actions).map(|a| mdp.observed(s, a).then_some(0.0)).collect())
        .collect();
    for _ in 0..max_iter {
        let mut delta: f64 = 0.0;
        let mut next = q.clone();
        for s in 0..mdp.n_states {
            for a in 0..mdp.n_actions {
                if !mdp.observed(s, a) {
                    continue;
                }
                let p = mdp.probabilities(s, a);
                let v: f64 = mdp.successors[s][a]
                    .iter()
                    .zip(&p)
                    .map(|(x, p)| p * (x.mean_reward + gamma * state_value(&q, x.next)))
                    .sum();
                delta = delta.max((v - q[s][a].unwrap()).abs());
                next[s][a] = Some(v);
            }
        }
        q = next;
        if delta < tol {
            break;
        }
    }
    q
}

/// Epsilon-greedy Q-learning on episodes simulated from the replayed model.
pub fn q_learning(mdp: &MdpModel, params: &KMeansQParams, rng: &mut ChaCha8Rng) -> Vec<Vec<Option<f64>>> {
    let mut q: Vec<Vec<Option<f64>>> = (0..mdp.n_states)
        .map(|s| (0..mdp.n_actions).map(|a| mdp.observed(s, a).then_some(0.0)).collect())
        .collect();
    let actions: Vec<Vec<usize>> =
        (0..mdp.n_states).map(|s| (0..mdp.n_actions).filter(|&a| mdp.observed(s, a)).collect()).collect();
    for _ in 0..params.episodes {
        let mut s = mdp.initial[rng.random_range(0..mdp.initial.len())];
        for _ in 0..params.max_steps {
            if actions[s].is_empty() {
                break;
            }
            let a = if rng.random::<f64>() < params.epsilon {
                actions[s][rng.random_range(0..actions[s].len())]
            } else {
                best_observed(&q[s]).unwrap().0
            };
            let succ = &mdp.successors[s][a];
            let total = mdp.count(s, a);
            let mut u = rng.random_range(0..total);
            let mut pick = &succ[0];
            for x in succ {
                if u < x.count {
                    pick = x;
                    break;
                }
                u -= x.count;
            }
            let target = pick.mean_reward + params.gamma * state_value(&q, pick.next);
            let cur = q[s][a].unwrap();
            q[s][a] = Some(cur + params.alpha * (target - cur));
            match pick.next {
                Some(n) => s = n,
                None => break,
            }
        }
    }
    q
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KMeansQPolicy {
    pub direction: Direction,
    pub schema: FeatureSchema,
    pub kmeans: KMeansModel,
    /// Sorted (cluster, last activity) pairs; position is the state index.
    pub states: Vec<(usize, String)>,
    pub n_actions: Vec<usize>,
    pub q: Vec<Vec<Option<f64>>>,
    /// Logged action counts per state.
    pub counts: Vec<Vec<usize>>,
    /// Most frequent logged action per decision point.
    pub fallback: Vec<usize>,
    pub silhouette: f64,
}

fn argmax_count(c: &[usize]) -> usize {
    let mut best = 0;
    for (i, &v) in c.iter().enumerate() {
        if v > c[best] {
            best = i;
        }
    }
    best
}

fn last_activity(prefix: Prefix<'_>) -> String {
    prefix.last().map(|e| e.activity.clone()).unwrap_or_default()
}

pub fn train_kmeans_q(
    dataset: &Dataset,
    params: &KMeansQParams,
    direction: Direction,
    seed: u64,
) -> Result<KMeansQPolicy> {
    params.validate()?;
    let schema = fit_schema(dataset)?;
    let samples = dataset.samples();
    let x: Vec<Vec<f64>> = samples.iter().map(|s| schema.encode_vector(dataset.prefix(s), EncodingMode::Flat)).collect();
    let kmeans = KMeansModel::fit(&x, params.n_clusters, params.kmeans_iters, &mut rng::stream(seed, "kmeans", &[]))?;
    let labels: Vec<usize> = x.iter().map(|p| kmeans.assign(p)).collect();
    let sil = silhouette(&x, &labels, 1000, &mut rng::stream(seed, "silhouette", &[]));

    let keys: Vec<(usize, String)> =
        samples.iter().zip(&labels).map(|(s, &l)| (l, last_activity(dataset.prefix(s)))).collect();
    let index: BTreeMap<(usize, String), usize> = {
        let mut m = BTreeMap::new();
        for k in &keys {
            m.entry(k.clone()).or_insert(0);
        }
        m.into_iter().enumerate().map(|(i, (k, _))| (k, i)).collect()
    };
    let states: Vec<(usize, String)> = index.keys().cloned().collect();
    let n_actions: Vec<usize> = dataset.specs().iter().map(|s| s.n_actions()).collect();
    let max_actions = n_actions.iter().copied().max().unwrap_or(0);
    let sign = match direction {
        Direction::Maximize => 1.0,
        Direction::Minimize => -1.0,
    };

    let mut transitions = Vec::with_capacity(samples.len());
    let mut initial = Vec::new();
    let mut counts = vec![vec![0usize; max_actions]; states.len()];
    let mut per_k = vec![vec![0usize; max_actions]; n_actions.len()];
    for (i, s) in samples.iter().enumerate() {
        let st = index[&keys[i]];
        counts[st][s.action] += 1;
        per_k[s.k - 1][s.action] += 1;
        let next = samples.get(i + 1).filter(|n| n.case == s.case);
        if s.k == 1 || i == 0 || samples[i - 1].case != s.case {
            initial.push(st);
        }
        match next {
            Some(_) => transitions.push((st, s.action, 0.0, Some(index[&keys[i + 1]]))),
            None => transitions.push((st, s.action, sign * s.outcome, None)),
        }
    }
    let mdp = MdpModel::from_transitions(states.len(), max_actions, &transitions, initial)?;
    let q = q_learning(&mdp, params, &mut rng::stream(seed, "q-learning", &[]));
    Ok(KMeansQPolicy {
        direction,
        schema,
        kmeans,
        states,
        n_actions,
        q,
        counts,
        fallback: per_k.iter().map(|c| argmax_count(c)).collect(),
        silhouette: sil,
    })
}

impl KMeansQPolicy {
    pub fn state_of(&self, prefix: Prefix<'_>) -> Option<usize> {
        let x = self.schema.encode_vector(prefix, EncodingMode::Flat);
        let key = (self.kmeans.assign(&x), last_activity(prefix));
        self.states.binary_search(&key).ok()
    }

    pub fn recommend(&self, prefix: Prefix<'_>, k: usize) -> Result<usize> {
        let n = *self.n_actions.get(k.wrapping_sub(1)).ok_or_else(|| Error::InvalidSpec(format!("no decision point {k}")))?;
        let Some(s) = self.state_of(prefix) else {
            return Ok(self.fallback[k - 1]);
        };
        if let Some((a, _)) = best_observed(&self.q[s][..n]) {
            return Ok(a);
        }
        let c = &self.counts[s][..n];
        Ok(if c.iter().any(|&v| v > 0) { argmax_count(c) } else { self.fallback[k - 1] })
    }
}

impl Policy for KMeansQPolicy {
    fn act(&self, _case: &SimCase, prefix: Prefix<'_>, k: usize) -> Result<usize> {
        self.recommend(prefix, k)
    }
}
