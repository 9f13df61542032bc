//! Loan-offer process with two interdependent decisions: the procedure
//! (standard or priority) and one of three interest-rate levels. Profit
//! (maximised) is the interest income of an accepted offer minus the
//! procedure cost; a refused offer earns nothing but still costs.
//!
//! The refusal probability is logistic in the rate, lower under priority
//! handling, and shifted by the client's income and risk.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::event_log::{AttrKind, ColumnHint, Event, Prefix, Trace, Value};

pub const PROCEDURES: [&str; 2] = ["standard", "priority"];
pub const RATES: [&str; 3] = ["low", "medium", "high"];
pub const STANDARD: usize = 0;
pub const PRIORITY: usize = 1;
pub const PROCEDURE: &str = "procedure";
pub const RATE: &str = "rate";
pub const AMOUNT: &str = "amount";
pub const INCOME: &str = "client_income";
pub const RISK: &str = "risk_class";
pub const DURATION: &str = "duration";
pub const ACCEPTED: &str = "accepted";
pub const INTEREST_INCOME: &str = "interest_income";
const RISK_CLASSES: [&str; 3] = ["low", "medium", "high"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LoanProcParams {
    pub cost_standard: f64,
    pub cost_priority: f64,
    /// Annual rates for the three levels, ascending.
    pub interest_levels: [f64; 3],
    /// Years of interest earned on an accepted loan.
    pub term_years: f64,
    pub amount_range: (f64, f64),
    pub income_range: (f64, f64),
    /// Logistic refusal model: intercept + rate_slope * (rate - mid rate)
    /// + standard_penalty * [standard] - income_slope * income_z + risk shift.
    pub refusal_intercept: f64,
    pub refusal_rate_slope: f64,
    pub refusal_standard_penalty: f64,
    pub refusal_income_slope: f64,
    pub refusal_risk_shift: [f64; 3],
    pub risk_weights: [f64; 3],
    /// Historical policy: priority iff amount exceeds this.
    pub bank_amount_threshold: f64,
    /// Historical rate level (index) after a standard / priority procedure.
    pub bank_rate_after: [usize; 2],
}

impl Default for LoanProcParams {
    fn default() -> Self {
        LoanProcParams {
            cost_standard: 150.0,
            cost_priority: 900.0,
            interest_levels: [0.04, 0.07, 0.10],
            term_years: 1.0,
            amount_range: (5_000.0, 60_000.0),
            income_range: (1_500.0, 9_000.0),
            refusal_intercept: -1.0,
            refusal_rate_slope: 40.0,
            refusal_standard_penalty: 1.2,
            refusal_income_slope: 0.8,
            refusal_risk_shift: [-0.5, 0.0, 0.8],
            risk_weights: [0.4, 0.4, 0.2],
            bank_amount_threshold: 30_000.0,
            bank_rate_after: [0, 2],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LoanProcDraws {
    pub amount: f64,
    pub income: f64,
    pub risk: usize,
    pub assess_duration: f64,
    pub process_duration: f64,
    /// Refusal happens iff this uniform draw is below the refusal probability.
    pub refusal_draw: f64,
}

pub fn log_hints() -> Vec<ColumnHint> {
    vec![
        ColumnHint::static_attr(AMOUNT, AttrKind::Num),
        ColumnHint::static_attr(INCOME, AttrKind::Num),
        ColumnHint::static_attr(RISK, AttrKind::Cat),
        ColumnHint::event(DURATION, AttrKind::Num),
        ColumnHint::event(PROCEDURE, AttrKind::Cat),
        ColumnHint::event(RATE, AttrKind::Cat),
        ColumnHint::event(ACCEPTED, AttrKind::Cat),
        ColumnHint::event(INTEREST_INCOME, AttrKind::Num),
    ]
}

fn logistic(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

impl LoanProcParams {
    pub fn validate(&self, n_decision_points: usize) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("loanproc: {m}")));
        if n_decision_points != 2 {
            return bad("has exactly 2 decision points");
        }
        if !(self.cost_standard >= 0.0) || !(self.cost_priority > self.cost_standard) {
            return bad("requires 0 <= cost_standard < cost_priority");
        }
        if !self.interest_levels.windows(2).all(|w| w[0] < w[1]) || self.interest_levels[0] < 0.0 {
            return bad("interest levels must be non-negative and strictly ascending");
        }
        if !(self.refusal_standard_penalty >= 0.0) {
            return bad("refusal_standard_penalty must be >= 0");
        }
        if self.amount_range.0 > self.amount_range.1 || self.income_range.0 >= self.income_range.1 {
            return bad("amount and income ranges must be ordered");
        }
        if self.risk_weights.iter().any(|w| !(*w >= 0.0)) || self.risk_weights.iter().sum::<f64>() <= 0.0 {
            return bad("risk weights must be non-negative with a positive total");
        }
        if self.bank_rate_after.iter().any(|r| *r > 2) {
            return bad("bank_rate_after entries must be rate indices 0..=2");
        }
        Ok(())
    }

    pub fn prefix_len(&self, k: usize) -> usize {
        2 * k
    }

    pub(crate) fn sample(&self, rng: &mut ChaCha8Rng) -> LoanProcDraws {
        let amount = rng.random_range(self.amount_range.0..=self.amount_range.1).round();
        let income = rng.random_range(self.income_range.0..=self.income_range.1).round();
        let total: f64 = self.risk_weights.iter().sum();
        let mut u = rng.random::<f64>() * total;
        let mut risk = 2;
        for (i, w) in self.risk_weights.iter().enumerate() {
            if u < *w {
                risk = i;
                break;
            }
            u -= w;
        }
        LoanProcDraws {
            amount,
            income,
            risk,
            assess_duration: rng.random_range(1.0..5.0),
            process_duration: rng.random_range(2.0..10.0),
            refusal_draw: rng.random(),
        }
    }

    pub fn cost(&self, procedure: usize) -> f64 {
        if procedure == PRIORITY {
            self.cost_priority
        } else {
            self.cost_standard
        }
    }

    pub fn refusal_probability(&self, draws: &LoanProcDraws, procedure: usize, rate: usize) -> f64 {
        let (lo, hi) = self.income_range;
        let income_z = 2.0 * (draws.income - lo) / (hi - lo) - 1.0;
        let z = self.refusal_intercept
            + self.refusal_rate_slope * (self.interest_levels[rate] - self.interest_levels[1])
            + if procedure == STANDARD { self.refusal_standard_penalty } else { 0.0 }
            - self.refusal_income_slope * income_z
            + self.refusal_risk_shift[draws.risk];
        logistic(z)
    }

    pub(crate) fn events(&self, case_id: &str, draws: &LoanProcDraws, actions: &[usize]) -> Vec<Event> {
        let statics = |e: Event| {
            e.with_static(AMOUNT, Value::Num(draws.amount))
                .with_static(INCOME, Value::Num(draws.income))
                .with_static(RISK, Value::Cat(RISK_CLASSES[draws.risk].into()))
        };
        let mut t = 0.0;
        let mut events = vec![statics(Event::new(case_id, "receive_application", t))];
        t += draws.assess_duration;
        events.push(statics(
            Event::new(case_id, "assess_application", t).with_attr(DURATION, Value::Num(draws.assess_duration)),
        ));
        let Some(&procedure) = actions.first() else { return events };
        events.push(statics(
            Event::new(case_id, "choose_procedure", t).with_attr(PROCEDURE, Value::Cat(PROCEDURES[procedure].into())),
        ));
        let process = if procedure == PRIORITY { 0.4 * draws.process_duration } else { draws.process_duration };
        t += process;
        events.push(statics(Event::new(case_id, "process_application", t).with_attr(DURATION, Value::Num(process))));
        let Some(&rate) = actions.get(1) else { return events };
        events.push(statics(Event::new(case_id, "set_interest_rate", t).with_attr(RATE, Value::Cat(RATES[rate].into()))));
        let refused = draws.refusal_draw < self.refusal_probability(draws, procedure, rate);
        let income = if refused { 0.0 } else { draws.amount * self.interest_levels[rate] * self.term_years };
        t += 1.0;
        events.push(statics(
            Event::new(case_id, "client_decision", t)
                .with_attr(ACCEPTED, Value::Cat(if refused { "no" } else { "yes" }.into()))
                .with_attr(INTEREST_INCOME, Value::Num(income)),
        ));
        events
    }

    pub fn bank_policy(&self, prefix: Prefix<'_>, k: usize) -> usize {
        if k == 1 {
            let amount = prefix.static_attrs().and_then(|s| s.get(AMOUNT)).and_then(Value::as_num).unwrap_or(0.0);
            return if amount > self.bank_amount_threshold { PRIORITY } else { STANDARD };
        }
        let procedure = prefix
            .events()
            .iter()
            .find_map(|e| e.event_attrs.get(PROCEDURE).and_then(Value::as_cat))
            .and_then(|p| PROCEDURES.iter().position(|q| *q == p))
            .unwrap_or(STANDARD);
        self.bank_rate_after[procedure]
    }

    pub fn outcome(&self, trace: &Trace) -> f64 {
        let procedure = trace
            .events
            .iter()
            .find_map(|e| e.event_attrs.get(PROCEDURE).and_then(Value::as_cat))
            .and_then(|p| PROCEDURES.iter().position(|q| *q == p))
            .unwrap_or(STANDARD);
        let income = trace
            .events
            .last()
            .and_then(|e| e.event_attrs.get(INTEREST_INCOME))
            .and_then(Value::as_num)
            .unwrap_or(f64::NAN);
        income - self.cost(procedure)
    }
}
