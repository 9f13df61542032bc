//! Small discrete processes with exactly known Q-functions.
//!
//! A toy case starts in one of `n_initial` states, then takes one action per
//! decision point; its outcome is a fixed number per (state, action sequence).
//! Traces are `start, action_1, ..., action_K, end`, so the prefix at decision
//! point `k` is the start event plus the first `k - 1` actions.

use crate::error::{Error, Result};
use crate::event_log::{build_dataset, ActionAttr, Dataset, DecisionPointSpec, Event, EventLog, Trace, Value};
use crate::policy::Direction;

pub const STATE_ATTR: &str = "state";
pub const OUTCOME_ATTR: &str = "y";

#[derive(Clone, Debug, PartialEq)]
pub struct ToyProcess {
    pub n_initial: usize,
    /// Action count per decision point.
    pub n_actions: Vec<usize>,
    /// Outcome per (initial state, action sequence), row-major with the initial
    /// state most significant and the last action least significant.
    pub outcomes: Vec<f64>,
    pub direction: Direction,
}

/// A decision state: the initial state and the actions taken so far.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ToyState {
    pub initial: usize,
    pub history: Vec<usize>,
}

impl ToyState {
    /// 1-based decision point this state belongs to.
    pub fn k(&self) -> usize {
        self.history.len() + 1
    }
}

fn sequences(sizes: &[usize]) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    for &n in sizes {
        out = out
            .into_iter()
            .flat_map(|s| {
                (0..n).map(move |a| {
                    let mut t = s.clone();
                    t.push(a);
                    t
                })
            })
            .collect();
    }
    out
}

impl ToyProcess {
    pub fn new(n_initial: usize, n_actions: Vec<usize>, outcomes: Vec<f64>, direction: Direction) -> Result<Self> {
        let toy = ToyProcess { n_initial, n_actions, outcomes, direction };
        let expected = toy.n_initial * toy.n_actions.iter().product::<usize>();
        if toy.n_initial == 0 || toy.n_actions.is_empty() || toy.n_actions.contains(&0) {
            return Err(Error::InvalidSpec("toy process needs states and actions".into()));
        }
        if toy.outcomes.len() != expected {
            return Err(Error::InvalidSpec(format!("toy process needs {expected} outcomes, got {}", toy.outcomes.len())));
        }
        Ok(toy)
    }

    /// Two initial states, two binary decisions: four prefix states at the second point.
    pub fn two_step() -> Self {
        #[rustfmt::skip]
        let outcomes = vec![
            // state 0: (a1, a2) = 00, 01, 10, 11
            3.0, 1.0, 0.0, 5.0,
            // state 1
            2.0, 4.0, 6.0, 1.0,
        ];
        ToyProcess::new(2, vec![2, 2], outcomes, Direction::Maximize).unwrap()
    }

    /// Email then discount: an email only pays off when followed by a discount.
    pub fn marketing() -> Self {
        // (email, discount): none/none, none/discount, email/none, email/discount
        ToyProcess::new(1, vec![2, 2], vec![10.0, 8.0, 6.0, 14.0], Direction::Maximize).unwrap()
    }

    pub fn n_decision_points(&self) -> usize {
        self.n_actions.len()
    }

    pub fn outcome(&self, initial: usize, actions: &[usize]) -> f64 {
        let mut idx = initial;
        for (&a, &n) in actions.iter().zip(&self.n_actions) {
            idx = idx * n + a;
        }
        self.outcomes[idx]
    }

    pub fn action_label(k: usize, a: usize) -> String {
        format!("d{k}_a{a}")
    }

    pub fn specs(&self) -> Vec<DecisionPointSpec> {
        self.n_actions
            .iter()
            .enumerate()
            .map(|(i, &n)| DecisionPointSpec {
                index: i + 1,
                prefix_len: i + 1,
                actions: (0..n).map(|a| Self::action_label(i + 1, a)).collect(),
                action_attr: ActionAttr::Activity,
            })
            .collect()
    }

    /// Events before the decision at `state`.
    pub fn prefix_events(&self, case_id: &str, state: &ToyState) -> Vec<Event> {
        let stat = Value::Cat(format!("s{}", state.initial));
        let mut events = vec![Event::new(case_id, "start", 0.0).with_static(STATE_ATTR, stat.clone())];
        for (i, &a) in state.history.iter().enumerate() {
            events.push(Event::new(case_id, Self::action_label(i + 1, a), (i + 1) as f64).with_static(STATE_ATTR, stat.clone()));
        }
        events
    }

    pub fn trace(&self, case_id: &str, initial: usize, actions: &[usize]) -> Result<Trace> {
        let mut events = self.prefix_events(case_id, &ToyState { initial, history: actions.to_vec() });
        let stat = events[0].static_attrs[STATE_ATTR].clone();
        events.push(
            Event::new(case_id, "end", (actions.len() + 1) as f64)
                .with_attr(OUTCOME_ATTR, Value::Num(self.outcome(initial, actions)))
                .with_static(STATE_ATTR, stat),
        );
        Trace::new(case_id, events)
    }

    pub fn trace_outcome(trace: &Trace) -> f64 {
        trace
            .events
            .last()
            .and_then(|e| e.event_attrs.get(OUTCOME_ATTR))
            .and_then(Value::as_num)
            .unwrap_or(f64::NAN)
    }

    /// Every (initial state, full action sequence) in enumeration order.
    pub fn all_sequences(&self) -> Vec<(usize, Vec<usize>)> {
        let seqs = sequences(&self.n_actions);
        (0..self.n_initial).flat_map(|s| seqs.iter().map(move |q| (s, q.clone()))).collect()
    }

    /// Every decision state at decision point `k`.
    pub fn states(&self, k: usize) -> Vec<ToyState> {
        let seqs = sequences(&self.n_actions[..k - 1]);
        (0..self.n_initial)
            .flat_map(|s| seqs.iter().map(move |h| ToyState { initial: s, history: h.clone() }))
            .collect()
    }

    /// A log holding `copies(initial, sequence)` cases of every sequence.
    pub fn log<F>(&self, copies: F) -> Result<EventLog>
    where
        F: Fn(usize, &[usize]) -> usize,
    {
        let mut traces = Vec::new();
        for (s, seq) in self.all_sequences() {
            for _ in 0..copies(s, &seq) {
                let id = format!("toy-{}", traces.len());
                traces.push(self.trace(&id, s, &seq)?);
            }
        }
        Ok(EventLog::new(traces))
    }

    pub fn dataset<F>(&self, copies: F) -> Result<Dataset>
    where
        F: Fn(usize, &[usize]) -> usize,
    {
        build_dataset(&self.log(copies)?, &self.specs(), Self::trace_outcome)
    }

    /// Exact Q-values at `state` under optimal continuation (max-form recursion).
    pub fn q_values(&self, state: &ToyState) -> Vec<f64> {
        (0..self.n_actions[state.history.len()])
            .map(|a| {
                let mut h = state.history.clone();
                h.push(a);
                self.value(state.initial, &h)
            })
            .collect()
    }

    fn value(&self, initial: usize, history: &[usize]) -> f64 {
        if history.len() == self.n_decision_points() {
            return self.outcome(initial, history);
        }
        let q = self.q_values(&ToyState { initial, history: history.to_vec() });
        q[self.direction.best_index(&q)]
    }

    pub fn optimal_action(&self, state: &ToyState) -> usize {
        self.direction.best_index(&self.q_values(state))
    }

    /// Best sequence per initial state by exhaustive enumeration of outcomes.
    pub fn brute_force_best(&self, initial: usize) -> (Vec<usize>, f64) {
        let seqs = sequences(&self.n_actions);
        let vals: Vec<f64> = seqs.iter().map(|s| self.outcome(initial, s)).collect();
        let i = self.direction.best_index(&vals);
        (seqs[i].clone(), vals[i])
    }

    /// Greedy actions from the regret-form recursion with exact Q. Every full
    /// sequence acts as one logged case with uniform support; the Q-values at each
    /// stage are the means of the regret-corrected values of the cases through it.
    pub fn regret_form_policy(&self) -> Vec<(ToyState, usize)> {
        let cases = self.all_sequences();
        let mut v: Vec<f64> = cases.iter().map(|(s, q)| self.outcome(*s, q)).collect();
        let mut out = Vec::new();
        for k in (1..=self.n_decision_points()).rev() {
            let n = self.n_actions[k - 1];
            let states = self.states(k);
            let mut q_of = Vec::with_capacity(states.len());
            for st in &states {
                let q: Vec<f64> = (0..n)
                    .map(|a| {
                        let through: Vec<f64> = cases
                            .iter()
                            .zip(&v)
                            .filter(|((s, seq), _)| *s == st.initial && seq[..k - 1] == st.history[..] && seq[k - 1] == a)
                            .map(|(_, val)| *val)
                            .collect();
                        through.iter().sum::<f64>() / through.len() as f64
                    })
                    .collect();
                q_of.push(q);
            }
            for ((s, seq), val) in cases.iter().zip(v.iter_mut()) {
                let idx = states.iter().position(|st| st.initial == *s && st.history[..] == seq[..k - 1]).unwrap();
                let q = &q_of[idx];
                *val += q[self.direction.best_index(q)] - q[seq[k - 1]];
            }
            for (st, q) in states.into_iter().zip(q_of) {
                let a = self.direction.best_index(&q);
                out.push((st, a));
            }
        }
        out.sort();
        out
    }

    /// Greedy actions from the max-form recursion.
    pub fn max_form_policy(&self) -> Vec<(ToyState, usize)> {
        let mut out: Vec<_> = (1..=self.n_decision_points())
            .flat_map(|k| self.states(k))
            .map(|st| {
                let a = self.optimal_action(&st);
                (st, a)
            })
            .collect();
        out.sort();
        out
    }
}

/// Whether the regret-form and max-form recursions agree on every state.
pub fn check_value_identity(toy: &ToyProcess) -> bool {
    toy.regret_form_policy() == toy.max_form_policy()
}
