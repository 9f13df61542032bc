//! Process simulators with common random numbers.
//!
//! A [`SimCase`] materialises all exogenous randomness of one case up front, so
//! replaying it under different action sequences gives counterfactual KPIs on
//! identical conditions. Logged actions mix the historical (bank) policy with
//! uniform random choices: with probability `delta` the bank's action is logged.

pub mod filecall;
pub mod loanproc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::event_log::{ActionAttr, ColumnHint, DecisionPointSpec, Event, EventLog, Prefix, Trace};
use crate::policy::{Direction, Policy};
use crate::rng;

pub use filecall::{FileCallDraws, FileCallParams, LoanType, PoolEntry};
pub use loanproc::{LoanProcDraws, LoanProcParams};

/// Default cap on the number of action sequences in an exhaustive enumeration.
pub const DEFAULT_COMBINATORIAL_CAP: u128 = 4096;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum SimulatorParams {
    FileCall(FileCallParams),
    LoanProc(LoanProcParams),
}

impl Default for SimulatorParams {
    fn default() -> Self {
        SimulatorParams::FileCall(FileCallParams::default())
    }
}

impl SimulatorParams {
    pub fn name(&self) -> &'static str {
        match self {
            SimulatorParams::FileCall(_) => "filecall",
            SimulatorParams::LoanProc(_) => "loanproc",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub n_decision_points: usize,
    /// Probability that a logged action follows the bank policy.
    pub delta: f64,
    pub seed: u64,
    pub params: SimulatorParams,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum CaseDraws {
    FileCall(FileCallDraws),
    LoanProc(LoanProcDraws),
}

/// One simulated case with every random draw fixed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimCase {
    pub id: String,
    /// Per decision point: uniform draw compared against `delta`.
    pub policy_coins: Vec<f64>,
    /// Per decision point: the action logged when the coin says "random".
    pub random_actions: Vec<usize>,
    pub draws: CaseDraws,
}

/// A generated observational log with the cases that produced it.
#[derive(Clone, Debug)]
pub struct GeneratedLog {
    pub cases: Vec<SimCase>,
    pub log: EventLog,
    pub outcomes: Vec<f64>,
    pub actions: Vec<Vec<usize>>,
}

#[derive(Clone, Debug)]
pub struct Simulator {
    config: SimConfig,
    specs: Vec<DecisionPointSpec>,
    pool: Option<Vec<PoolEntry>>,
}

impl Simulator {
    pub fn new(config: SimConfig) -> Result<Self> {
        if !(0.0..=1.0).contains(&config.delta) {
            return Err(Error::Config(format!("delta must be in [0, 1], got {}", config.delta)));
        }
        let k = config.n_decision_points;
        let mut pool = None;
        let specs = match &config.params {
            SimulatorParams::FileCall(p) => {
                p.validate(k)?;
                if let Some(path) = &p.attribute_pool {
                    pool = Some(filecall::load_pool(path)?);
                }
                (1..=k)
                    .map(|i| DecisionPointSpec {
                        index: i,
                        prefix_len: p.prefix_len(i),
                        actions: filecall::ACTIONS.iter().map(|s| s.to_string()).collect(),
                        action_attr: ActionAttr::Activity,
                    })
                    .collect()
            }
            SimulatorParams::LoanProc(p) => {
                p.validate(k)?;
                vec![
                    DecisionPointSpec {
                        index: 1,
                        prefix_len: p.prefix_len(1),
                        actions: loanproc::PROCEDURES.iter().map(|s| s.to_string()).collect(),
                        action_attr: ActionAttr::Event(loanproc::PROCEDURE.into()),
                    },
                    DecisionPointSpec {
                        index: 2,
                        prefix_len: p.prefix_len(2),
                        actions: loanproc::RATES.iter().map(|s| s.to_string()).collect(),
                        action_attr: ActionAttr::Event(loanproc::RATE.into()),
                    },
                ]
            }
        };
        Ok(Simulator { config, specs, pool })
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    pub fn n_decision_points(&self) -> usize {
        self.config.n_decision_points
    }

    pub fn direction(&self) -> Direction {
        match self.config.params {
            SimulatorParams::FileCall(_) => Direction::Minimize,
            SimulatorParams::LoanProc(_) => Direction::Maximize,
        }
    }

    pub fn specs(&self) -> &[DecisionPointSpec] {
        &self.specs
    }

    pub fn column_hints(&self) -> Vec<ColumnHint> {
        match self.config.params {
            SimulatorParams::FileCall(_) => filecall::log_hints(),
            SimulatorParams::LoanProc(_) => loanproc::log_hints(),
        }
    }

    /// Draws a case with id `id` from `rng`.
    pub fn sample_case(&self, rng: &mut ChaCha8Rng, id: String) -> SimCase {
        let k = self.n_decision_points();
        let draws = match &self.config.params {
            SimulatorParams::FileCall(p) => CaseDraws::FileCall(p.sample(rng, k, self.pool.as_deref())),
            SimulatorParams::LoanProc(p) => CaseDraws::LoanProc(p.sample(rng)),
        };
        let policy_coins = (0..k).map(|_| rng.random::<f64>()).collect();
        let random_actions = self.specs.iter().map(|s| rng.random_range(0..s.n_actions())).collect();
        SimCase { id, policy_coins, random_actions, draws }
    }

    /// Case `index` of the named stream; ids are `<stream>-<index>`.
    pub fn case(&self, stream: &str, path: &[u64], index: u64) -> SimCase {
        let mut full = path.to_vec();
        full.push(index);
        let mut r = rng::stream(self.config.seed, stream, &full);
        self.sample_case(&mut r, format!("{stream}-{index}"))
    }

    pub fn cases(&self, stream: &str, path: &[u64], n: usize) -> Vec<SimCase> {
        (0..n as u64).map(|i| self.case(stream, path, i)).collect()
    }

    fn check_actions(&self, actions: &[usize], complete: bool) -> Result<()> {
        let k = self.n_decision_points();
        if actions.len() > k || (complete && actions.len() != k) {
            return Err(Error::InvalidActions(format!("expected {k} actions, got {}", actions.len())));
        }
        for (spec, &a) in self.specs.iter().zip(actions) {
            if a >= spec.n_actions() {
                return Err(Error::InvalidActions(format!("action {a} out of range at decision point {}", spec.index)));
            }
        }
        Ok(())
    }

    /// Events observed after taking `actions`: the prefix for decision point
    /// `actions.len() + 1`, or the complete trace when all actions are given.
    pub fn events(&self, case: &SimCase, actions: &[usize]) -> Result<Vec<Event>> {
        self.check_actions(actions, false)?;
        Ok(match (&self.config.params, &case.draws) {
            (SimulatorParams::FileCall(p), CaseDraws::FileCall(d)) => {
                p.events(&case.id, d, actions, self.n_decision_points())
            }
            (SimulatorParams::LoanProc(p), CaseDraws::LoanProc(d)) => p.events(&case.id, d, actions),
            _ => return Err(Error::InvalidActions("case was drawn by a different simulator".into())),
        })
    }

    /// Complete trace and KPI under `actions`.
    pub fn rollout(&self, case: &SimCase, actions: &[usize]) -> Result<(Trace, f64)> {
        self.check_actions(actions, true)?;
        let trace = Trace::new(case.id.clone(), self.events(case, actions)?)?;
        let kpi = self.outcome(&trace);
        Ok((trace, kpi))
    }

    pub fn outcome(&self, trace: &Trace) -> f64 {
        match &self.config.params {
            SimulatorParams::FileCall(p) => p.outcome(trace),
            SimulatorParams::LoanProc(p) => p.outcome(trace),
        }
    }

    /// The historical decision rule at decision point `k`.
    pub fn bank_policy(&self, _case: &SimCase, prefix: Prefix<'_>, k: usize) -> usize {
        match &self.config.params {
            SimulatorParams::FileCall(p) => p.bank_policy(prefix),
            SimulatorParams::LoanProc(p) => p.bank_policy(prefix, k),
        }
    }

    /// The action the log records: bank policy with probability `delta`,
    /// otherwise the case's pre-drawn random action.
    pub fn logged_action(&self, case: &SimCase, prefix: Prefix<'_>, k: usize) -> usize {
        if case.policy_coins[k - 1] < self.config.delta {
            self.bank_policy(case, prefix, k)
        } else {
            case.random_actions[k - 1]
        }
    }

    /// Plays `policy` forward on `case` and returns the chosen actions, trace and KPI.
    pub fn play(&self, case: &SimCase, policy: &dyn Policy) -> Result<(Vec<usize>, Trace, f64)> {
        let mut actions = Vec::with_capacity(self.n_decision_points());
        for k in 1..=self.n_decision_points() {
            let events = self.events(case, &actions)?;
            let a = policy.act(case, Prefix::new(&events), k)?;
            actions.push(a);
        }
        let (trace, kpi) = self.rollout(case, &actions)?;
        Ok((actions, trace, kpi))
    }

    /// Observational log of `n` cases drawn from the named stream.
    pub fn generate(&self, stream: &str, path: &[u64], n: usize) -> Result<GeneratedLog> {
        let cases = self.cases(stream, path, n);
        let logger = LoggingPolicy(self);
        let mut traces = Vec::with_capacity(n);
        let mut outcomes = Vec::with_capacity(n);
        let mut actions = Vec::with_capacity(n);
        for case in &cases {
            let (a, trace, kpi) = self.play(case, &logger)?;
            traces.push(trace);
            outcomes.push(kpi);
            actions.push(a);
        }
        Ok(GeneratedLog { cases, log: EventLog::new(traces), outcomes, actions })
    }

    pub fn generate_log(&self, n_cases: usize) -> Result<(EventLog, Vec<f64>)> {
        let g = self.generate("log", &[], n_cases)?;
        Ok((g.log, g.outcomes))
    }

    pub fn n_sequences(&self) -> u128 {
        self.specs.iter().map(|s| s.n_actions() as u128).product()
    }

    /// Every action sequence (lexicographic, first decision most significant) with its KPI.
    pub fn enumerate_outcomes(&self, case: &SimCase, cap: u128) -> Result<Vec<(Vec<usize>, f64)>> {
        let count = self.n_sequences();
        if count > cap {
            return Err(Error::CombinatorialLimit { count, cap });
        }
        let sizes: Vec<usize> = self.specs.iter().map(DecisionPointSpec::n_actions).collect();
        let mut out = Vec::with_capacity(count as usize);
        let mut seq = vec![0usize; sizes.len()];
        loop {
            let (_, kpi) = self.rollout(case, &seq)?;
            out.push((seq.clone(), kpi));
            let mut pos = sizes.len();
            loop {
                if pos == 0 {
                    return Ok(out);
                }
                pos -= 1;
                seq[pos] += 1;
                if seq[pos] < sizes[pos] {
                    break;
                }
                seq[pos] = 0;
            }
        }
    }

    /// Best achievable KPI and the first sequence attaining it.
    pub fn best_outcome(&self, case: &SimCase, cap: u128) -> Result<(Vec<usize>, f64)> {
        let table = self.enumerate_outcomes(case, cap)?;
        let dir = self.direction();
        let kpis: Vec<f64> = table.iter().map(|(_, v)| *v).collect();
        let best = dir.best_index(&kpis);
        Ok(table[best].clone())
    }
}

/// The historical policy as a [`Policy`].
pub struct BankPolicy<'a>(pub &'a Simulator);

impl Policy for BankPolicy<'_> {
    fn act(&self, case: &SimCase, prefix: Prefix<'_>, k: usize) -> Result<usize> {
        Ok(self.0.bank_policy(case, prefix, k))
    }
}

/// The delta-mixed logging policy as a [`Policy`].
pub struct LoggingPolicy<'a>(pub &'a Simulator);

impl Policy for LoggingPolicy<'_> {
    fn act(&self, case: &SimCase, prefix: Prefix<'_>, k: usize) -> Result<usize> {
        Ok(self.0.logged_action(case, prefix, k))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::event_log::{build_dataset, Value};

    fn filecall(k: usize, delta: f64) -> Simulator {
        Simulator::new(SimConfig {
            n_decision_points: k,
            delta,
            seed: 11,
            params: SimulatorParams::FileCall(FileCallParams::default()),
        })
        .unwrap()
    }

    fn loanproc(delta: f64) -> Simulator {
        Simulator::new(SimConfig {
            n_decision_points: 2,
            delta,
            seed: 5,
            params: SimulatorParams::LoanProc(LoanProcParams::default()),
        })
        .unwrap()
    }

    #[test]
    fn defaults_make_calling_a_real_choice() {
        for k in 2..=4 {
            let sim = filecall(k, 0.9);
            let cases = sim.cases("calibration", &[], 1000);
            let calling = cases.iter().filter(|c| sim.best_outcome(c, 4096).unwrap().0.contains(&filecall::CALL)).count();
            let frac = calling as f64 / cases.len() as f64;
            assert!((0.3..=0.6).contains(&frac), "K={k}: calling optimal for {frac}");
        }
    }

    fn params(sim: &Simulator) -> &FileCallParams {
        match &sim.config().params {
            SimulatorParams::FileCall(p) => p,
            _ => unreachable!(),
        }
    }

    fn draws(case: &SimCase) -> &FileCallDraws {
        match &case.draws {
            CaseDraws::FileCall(d) => d,
            _ => unreachable!(),
        }
    }

    #[test]
    fn config_validation() {
        let mut cfg = filecall(2, 0.5).config().clone();
        cfg.delta = 1.2;
        assert!(Simulator::new(cfg.clone()).is_err());
        cfg.delta = 0.5;
        cfg.n_decision_points = 7;
        assert!(Simulator::new(cfg).is_err());
        let mut lp = loanproc(0.5).config().clone();
        lp.n_decision_points = 3;
        assert!(Simulator::new(lp).is_err());
    }

    #[test]
    fn same_seed_same_case() {
        let sim = filecall(3, 0.9);
        assert_eq!(sim.case("t", &[1], 4), sim.case("t", &[1], 4));
        assert_ne!(sim.case("t", &[1], 4), sim.case("t", &[1], 5));
    }

    #[test]
    fn throughput_draws_within_range() {
        let sim = filecall(2, 0.9);
        let (lo, hi) = params(&sim).tpt_range;
        for c in sim.cases("t", &[], 500) {
            let d = draws(&c);
            assert!(d.base_tpt >= lo && d.base_tpt <= hi);
        }
    }

    #[test]
    fn all_wait_costs_base_throughput() {
        let sim = filecall(3, 0.9);
        let p = params(&sim);
        for c in sim.cases("t", &[], 20) {
            let (_, kpi) = sim.rollout(&c, &[0, 0, 0]).unwrap();
            assert_eq!(kpi, p.cost_tpt * draws(&c).base_tpt);
        }
    }

    #[test]
    fn single_call_difference_matches_formula() {
        let sim = filecall(2, 0.9);
        let p = params(&sim);
        for c in sim.cases("t", &[], 20) {
            let d = draws(&c);
            let (_, call_wait) = sim.rollout(&c, &[1, 0]).unwrap();
            let (_, wait_wait) = sim.rollout(&c, &[0, 0]).unwrap();
            let avg1 = (d.durations[0] + d.durations[1]) / 2.0;
            let effect = p.multiplier(&d.loan_type) * p.beta * avg1;
            let expected = p.cost_call - p.cost_tpt * effect;
            assert!((call_wait - wait_wait - expected).abs() < 1e-6, "{} vs {expected}", call_wait - wait_wait);
        }
    }

    #[test]
    fn prefix_does_not_depend_on_later_actions() {
        let sim = filecall(3, 0.9);
        let c = sim.case("t", &[], 0);
        let (full_a, _) = sim.rollout(&c, &[1, 0, 1]).unwrap();
        let (full_b, _) = sim.rollout(&c, &[1, 1, 0]).unwrap();
        let l2 = sim.specs()[1].prefix_len;
        assert_eq!(full_a.events[..l2], full_b.events[..l2]);
        assert_eq!(sim.events(&c, &[1]).unwrap(), full_a.events[..l2].to_vec());
    }

    #[test]
    fn trace_structure_and_outcome() {
        let sim = filecall(4, 0.9);
        let c = sim.case("t", &[], 3);
        let (trace, kpi) = sim.rollout(&c, &[1, 0, 1, 1]).unwrap();
        assert_eq!(kpi, sim.outcome(&trace));
        for spec in sim.specs() {
            assert!(["wait", "call"].contains(&trace.events[spec.prefix_len].activity.as_str()));
        }
        assert_eq!(trace.len(), sim.specs()[3].prefix_len + 2);
    }

    #[test]
    fn later_call_effect_shrinks_after_earlier_call() {
        let sim = filecall(2, 0.9);
        for c in sim.cases("t", &[], 200) {
            let effect2 = |a1: usize| {
                let (_, with) = sim.rollout(&c, &[a1, 1]).unwrap();
                let (_, without) = sim.rollout(&c, &[a1, 0]).unwrap();
                without - with
            };
            assert!(effect2(1) <= effect2(0) + 1e-9);
        }
    }

    #[test]
    fn bank_policy_rule() {
        let sim = filecall(2, 1.0);
        let p = params(&sim);
        let prefix_for = |loan: &str, durations: &[f64]| -> Vec<Event> {
            durations
                .iter()
                .map(|d| {
                    Event::new("c", "W", 0.0)
                        .with_attr("duration", Value::Num(*d))
                        .with_static("loan_type", Value::Cat(loan.into()))
                })
                .collect()
        };
        let c = sim.case("t", &[], 0);
        let ev = prefix_for("car", &[5000.0, 5000.0]);
        assert_eq!(sim.bank_policy(&c, Prefix::new(&ev), 1), filecall::CALL);
        let ev = prefix_for("home improvement", &[9000.0]);
        assert_eq!(sim.bank_policy(&c, Prefix::new(&ev), 1), filecall::WAIT);
        let ev = prefix_for("loan takeover", &[4000.0, 4050.0]);
        assert_eq!(p.duration_threshold, 4025.0);
        assert_eq!(sim.bank_policy(&c, Prefix::new(&ev), 1), filecall::WAIT);
    }

    #[test]
    fn delta_one_logs_bank_actions() {
        let sim = filecall(3, 1.0);
        let g = sim.generate("log", &[], 200).unwrap();
        for (case, actions) in g.cases.iter().zip(&g.actions) {
            for k in 1..=3 {
                let ev = sim.events(case, &actions[..k - 1]).unwrap();
                assert_eq!(actions[k - 1], sim.bank_policy(case, Prefix::new(&ev), k));
            }
        }
    }

    #[test]
    fn logged_outcome_replays_exactly() {
        let sim = filecall(3, 0.9);
        let g = sim.generate("log", &[], 50).unwrap();
        for ((case, actions), y) in g.cases.iter().zip(&g.actions).zip(&g.outcomes) {
            assert_eq!(sim.rollout(case, actions).unwrap().1, *y);
        }
    }

    #[test]
    fn dataset_from_filecall_log_counts_samples() {
        let sim = filecall(2, 0.9);
        let (log, _) = sim.generate_log(100).unwrap();
        let ds = build_dataset(&log, sim.specs(), |t| sim.outcome(t)).unwrap();
        assert_eq!(ds.samples().len(), 200);
    }

    #[test]
    fn enumeration_sizes_and_minimum() {
        let sim = filecall(2, 0.9);
        let c = sim.case("t", &[], 1);
        let table = sim.enumerate_outcomes(&c, 4096).unwrap();
        assert_eq!(table.len(), 4);
        let (_, best) = sim.best_outcome(&c, 4096).unwrap();
        assert!(table.iter().all(|(_, v)| best <= *v));
        assert!(matches!(sim.enumerate_outcomes(&c, 3), Err(Error::CombinatorialLimit { .. })));
        let lp = loanproc(0.5);
        assert_eq!(lp.enumerate_outcomes(&lp.case("t", &[], 0), 4096).unwrap().len(), 6);
    }

    #[test]
    fn rollout_validates_actions() {
        let sim = filecall(2, 0.9);
        let c = sim.case("t", &[], 0);
        assert!(matches!(sim.rollout(&c, &[0]), Err(Error::InvalidActions(_))));
        assert!(matches!(sim.rollout(&c, &[0, 2]), Err(Error::InvalidActions(_))));
    }

    #[test]
    fn loanproc_priority_costs_more_without_refusal() {
        let sim = loanproc(0.5);
        let SimulatorParams::LoanProc(p) = &sim.config().params else { unreachable!() };
        for mut c in sim.cases("t", &[], 20) {
            let CaseDraws::LoanProc(d) = &mut c.draws else { unreachable!() };
            d.refusal_draw = 1.0;
            for rate in 0..3 {
                let (_, standard) = sim.rollout(&c, &[0, rate]).unwrap();
                let (_, priority) = sim.rollout(&c, &[1, rate]).unwrap();
                assert!((standard - priority - (p.cost_priority - p.cost_standard)).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn loanproc_refusal_monotone() {
        let sim = loanproc(0.5);
        let SimulatorParams::LoanProc(p) = &sim.config().params else { unreachable!() };
        for c in sim.cases("t", &[], 50) {
            let CaseDraws::LoanProc(d) = &c.draws else { unreachable!() };
            for rate in 0..3 {
                let s = p.refusal_probability(d, 0, rate);
                let q = p.refusal_probability(d, 1, rate);
                assert!((0.0..=1.0).contains(&s) && s >= q);
            }
            assert!(p.refusal_probability(d, 0, 2) > p.refusal_probability(d, 0, 0));
        }
    }

    #[test]
    fn loanproc_log_builds_dataset() {
        let sim = loanproc(0.9);
        let (log, outcomes) = sim.generate_log(30).unwrap();
        let ds = build_dataset(&log, sim.specs(), |t| sim.outcome(t)).unwrap();
        assert_eq!(ds.samples().len(), 60);
        assert_eq!(ds.outcomes(), outcomes.as_slice());
    }

    #[test]
    fn attribute_pool_resamples_statics_and_durations() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("pool.csv");
        std::fs::write(
            &path,
            "case_id,activity,timestamp,loan_type,requested_amount,duration\n\
             p1,a,0,boat,1000,100\np1,b,1,boat,1000,300\n",
        )
        .unwrap();
        let params = FileCallParams { attribute_pool: Some(path.display().to_string()), ..Default::default() };
        let sim = Simulator::new(SimConfig {
            n_decision_points: 2,
            delta: 0.5,
            seed: 1,
            params: SimulatorParams::FileCall(params),
        })
        .unwrap();
        let c = sim.case("t", &[], 0);
        let d = draws(&c);
        assert_eq!(d.loan_type, "boat");
        assert_eq!(d.durations, vec![100.0, 300.0, 100.0, 300.0]);
    }
}
