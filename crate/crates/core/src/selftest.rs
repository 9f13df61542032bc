//! Oracle checks runnable from the command line.

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::base_models::{fit, grad_check, FittedModel, MlpParams, ModelSpec, RidgeParams};
use crate::baselines::{q_learning, train_sep, value_iteration, KMeansQParams, MdpModel};
use crate::causal_learners::{fit_stage, pseudo_outcome, LearnerKind, RaVariant, StageData};
use crate::event_log::Prefix;
use crate::policy::Direction;
use crate::scope::toy::{check_value_identity, ToyProcess, ToyState};
use crate::scope::{train, LearnerConfig, TrainedPolicy};

#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, f: impl FnOnce() -> Result<String, String>) -> Check {
    match f() {
        Ok(detail) => Check { name, passed: true, detail },
        Err(detail) => Check { name, passed: false, detail },
    }
}

fn e2s<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn recommend(policy: &TrainedPolicy, toy: &ToyProcess, st: &ToyState) -> Result<usize, String> {
    let ev = toy.prefix_events("q", st);
    policy.recommend(Prefix::new(&ev), st.k()).map_err(e2s)
}

pub fn dp_oracle() -> Check {
    check("dp-oracle", || {
        let t = Instant::now();
        let toy = ToyProcess::two_step();
        let ds = toy.dataset(|_, _| 1).map_err(e2s)?;
        let policy = train(&ds, &LearnerConfig::new(LearnerKind::S, ModelSpec::Tabular), toy.direction, 0).map_err(e2s)?;
        let mut total = 0;
        let mut hits = 0;
        for k in 1..=toy.n_decision_points() {
            for st in toy.states(k) {
                total += 1;
                hits += usize::from(recommend(&policy, &toy, &st)? == toy.optimal_action(&st));
            }
        }
        let elapsed = t.elapsed();
        let detail = format!("{hits}/{total} states optimal in {elapsed:?}");
        if hits == total && elapsed.as_secs_f64() < 1.0 {
            Ok(detail)
        } else {
            Err(detail)
        }
    })
}

pub fn regret_max_identity() -> Check {
    check("regret-max-identity", || {
        let three: Vec<f64> = (0..16).map(|i| ((i * 7) % 11) as f64).collect();
        let toys = [
            ToyProcess::two_step(),
            ToyProcess::marketing(),
            ToyProcess::new(2, vec![2, 2, 2], three, Direction::Minimize).map_err(e2s)?,
        ];
        let n_ok = toys.iter().filter(|t| check_value_identity(t)).count();
        let detail = format!("{n_ok}/{} instances identical", toys.len());
        if n_ok == toys.len() {
            Ok(detail)
        } else {
            Err(detail)
        }
    })
}

pub fn alignment_separation() -> Check {
    check("alignment-separation", || {
        let toy = ToyProcess::marketing();
        // The discount at k=2 is rare historically.
        let ds = toy.dataset(|_, seq| if seq[1] == 1 { 1 } else { 9 }).map_err(e2s)?;
        let cfg = LearnerConfig::new(LearnerKind::S, ModelSpec::Tabular);
        let sep = train_sep(&ds, &cfg, toy.direction, 0).map_err(e2s)?;
        let scope = train(&ds, &cfg, toy.direction, 0).map_err(e2s)?;
        let root = ToyState { initial: 0, history: vec![] };
        let best = toy.brute_force_best(0).0[0];
        let (a_sep, a_scope) = (recommend(&sep, &toy, &root)?, recommend(&scope, &toy, &root)?);
        let detail = format!("optimal {best}, sep {a_sep}, scope {a_scope}");
        if a_scope == best && a_sep != best {
            Ok(detail)
        } else {
            Err(detail)
        }
    })
}

pub fn learner_oracles() -> Check {
    check("learner-oracles", || {
        let mut x = Vec::new();
        let mut a = Vec::new();
        let mut y = Vec::new();
        for i in 0..60 {
            x.push(vec![(i % 3) as f64]);
            a.push((i / 3) % 2);
            y.push(((i * 13) % 7) as f64 * 0.5 + (i % 3) as f64);
        }
        let data = StageData { k: 1, features: &x, actions: &a, targets: &y, n_actions: 2 };
        let mut worst: f64 = 0.0;
        for kind in [LearnerKind::S, LearnerKind::T] {
            let l = fit_stage(kind, RaVariant::AsPrinted, &data, &ModelSpec::Tabular, 0).map_err(e2s)?;
            for s in 0..3 {
                let q = l.q_values(&[s as f64]).map_err(e2s)?;
                for (act, qa) in q.iter().enumerate() {
                    let g: Vec<f64> = (0..60).filter(|&i| i % 3 == s && a[i] == act).map(|i| y[i]).collect();
                    let mean = g.iter().sum::<f64>() / g.len() as f64;
                    worst = worst.max((qa - mean).abs());
                }
            }
        }
        let q = [1.5, 3.0];
        let printed = [pseudo_outcome(RaVariant::AsPrinted, 0, 2.0, &q, 1, 0), pseudo_outcome(RaVariant::AsPrinted, 1, 2.0, &q, 1, 0)];
        let detail = format!("max |Q - group mean| = {worst:.3e}; pseudo-outcomes {printed:?}");
        if worst < 1e-9 && printed == [-0.5, -1.0] {
            Ok(detail)
        } else {
            Err(detail)
        }
    })
}

pub fn gradient_check() -> Check {
    check("mlp-gradient", || {
        let x = vec![vec![0.0, 0.0], vec![0.0, 1.0], vec![1.0, 0.0], vec![1.0, 1.0]];
        let y = vec![0.0, 1.0, 1.0, 0.0];
        let params = MlpParams { hidden: vec![2], ..MlpParams::default() };
        let worst = (0..5).map(|seed| grad_check(&params, &x, &y, seed)).fold(0.0, f64::max);
        let detail = format!("max relative error {worst:.3e}");
        if worst < 1e-4 {
            Ok(detail)
        } else {
            Err(detail)
        }
    })
}

pub fn boosting_monotone() -> Check {
    check("boosting-monotone", || {
        let x: Vec<Vec<f64>> = (0..200).map(|i| vec![(i % 17) as f64, ((i * 7) % 23) as f64]).collect();
        let y: Vec<f64> = x.iter().map(|r| (r[0] * 0.3).sin() * 4.0 + r[1] * 0.1).collect();
        let m = fit(&ModelSpec::default(), &x, &y, 1).map_err(e2s)?;
        let FittedModel::Boosted { model, .. } = m else { return Err("not a boosted model".into()) };
        let mse = model.staged_mse(&x, &y);
        let ok = mse.windows(2).all(|w| w[1] <= w[0] + 1e-12);
        let detail = format!("training mse {:.4} -> {:.6} over {} rounds", mse[0], mse[mse.len() - 1], mse.len() - 1);
        if ok {
            Ok(detail)
        } else {
            Err(detail)
        }
    })
}

pub fn ridge_exact() -> Check {
    check("ridge-exact", || {
        let coef = [2.0, -1.5, 0.25];
        let x: Vec<Vec<f64>> = (0..30).map(|i| vec![i as f64, ((i * i) % 7) as f64, ((i * 3) % 5) as f64]).collect();
        let y: Vec<f64> = x.iter().map(|r| 0.5 + r.iter().zip(&coef).map(|(a, b)| a * b).sum::<f64>()).collect();
        let m = fit(&ModelSpec::Ridge(RidgeParams { l2: 0.0 }), &x, &y, 0).map_err(e2s)?;
        let FittedModel::Ridge { model, .. } = m else { return Err("not a ridge model".into()) };
        let err = model.coefficients.iter().zip(&coef).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        let detail = format!("max coefficient error {err:.3e}");
        if err < 1e-9 {
            Ok(detail)
        } else {
            Err(detail)
        }
    })
}

pub fn q_learning_convergence() -> Check {
    check("q-learning", || {
        let t = [(0, 0, 1.0, Some(1)), (0, 1, 0.5, None), (1, 0, 2.0, None), (1, 1, -5.0, Some(0))];
        let mdp = MdpModel::from_transitions(2, 2, &t, vec![0, 1]).map_err(e2s)?;
        let star = value_iteration(&mdp, 0.9, 1e-12, 10_000);
        let params = KMeansQParams { gamma: 0.9, episodes: 5000, epsilon: 0.3, ..Default::default() };
        let q = q_learning(&mdp, &params, &mut ChaCha8Rng::seed_from_u64(3));
        let mut worst: f64 = 0.0;
        for s in 0..2 {
            for a in 0..2 {
                let (Some(v), Some(w)) = (q[s][a], star[s][a]) else { return Err(format!("missing Q({s}, {a})")) };
                worst = worst.max((v - w).abs());
            }
        }
        let detail = format!("max |Q - Q*| = {worst:.3e}");
        if worst < 1e-3 {
            Ok(detail)
        } else {
            Err(detail)
        }
    })
}

/// Every check, in a fixed order.
pub fn run_all() -> Vec<Check> {
    vec![
        dp_oracle(),
        regret_max_identity(),
        alignment_separation(),
        learner_oracles(),
        gradient_check(),
        boosting_monotone(),
        ridge_exact(),
        q_learning_convergence(),
    ]
}

#[cfg(test)]
mod tests {
    #[test]
    fn all_checks_pass() {
        for c in super::run_all() {
            assert!(c.passed, "{}: {}", c.name, c.detail);
        }
    }
}
