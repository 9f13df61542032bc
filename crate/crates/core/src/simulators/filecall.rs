//! Incomplete-files process: at every decision point the bank either calls
//! the client or waits. KPI (minimised):
//! `cost_tpt * throughput + n_calls * cost_call`.
//!
//! A call at decision point `j` shortens the throughput time by
//! `multiplier(loan_type) * beta * avg_duration_j` and rescales the durations
//! of all later activities by `post_call_duration_factor`, which shrinks the
//! effect of later calls.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::event_log::{AttrKind, ColumnHint, Event, Prefix, Trace, Value};

pub const WAIT: usize = 0;
pub const CALL: usize = 1;
pub const ACTIONS: [&str; 2] = ["wait", "call"];
pub const LOAN_TYPE: &str = "loan_type";
pub const AMOUNT: &str = "requested_amount";
pub const DURATION: &str = "duration";
pub const THROUGHPUT: &str = "throughput";
const END_ACTIVITY: &str = "W_Files complete";
const INITIAL_ACTIVITIES: [&str; 2] = ["W_Handle leads", "W_Complete application"];
const STAGE_ACTIVITIES: [&str; 2] = ["W_Validate application", "W_Call after offers"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoanType {
    pub name: String,
    pub weight: f64,
    /// Call-effect multiplier.
    pub multiplier: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FileCallParams {
    pub cost_tpt: f64,
    pub cost_call: f64,
    /// Uniform range of the base throughput time.
    pub tpt_range: (f64, f64),
    /// The bank calls when the average activity duration exceeds this.
    pub duration_threshold: f64,
    /// Loan types that the bank policy considers for a call.
    pub bank_call_types: Vec<String>,
    pub loan_types: Vec<LoanType>,
    /// Sensitivity of the call effect to the average prior activity duration.
    pub beta: f64,
    /// Each call multiplies all later activity durations by this factor.
    pub post_call_duration_factor: f64,
    /// Activity durations of stage `s` (0 before the first decision point) are
    /// scaled by `(1 + stage_growth)^s`, so cases slow down as they progress.
    pub stage_growth: f64,
    /// Activities before the first decision point and between consecutive ones.
    pub initial_activities: usize,
    pub activities_per_stage: usize,
    /// Typical activity duration; a case draws a pace and each activity a jitter around it.
    pub duration_scale: f64,
    pub pace_range: (f64, f64),
    pub jitter_range: (f64, f64),
    pub amount_range: (f64, f64),
    /// Optional event-log CSV from which loan type, amount and durations are resampled.
    pub attribute_pool: Option<String>,
}

impl Default for FileCallParams {
    fn default() -> Self {
        let lt = |name: &str, weight: f64, multiplier: f64| LoanType { name: name.into(), weight, multiplier };
        FileCallParams {
            cost_tpt: 1.0,
            cost_call: 4500.0,
            tpt_range: (41_000.0, 43_000.0),
            duration_threshold: 4025.0,
            bank_call_types: vec!["car".into(), "loan takeover".into()],
            loan_types: vec![
                lt("car", 0.28, 0.9),
                lt("loan takeover", 0.17, 0.9),
                lt("home improvement", 0.22, 0.75),
                lt("other", 0.18, 0.75),
                lt("unknown", 0.15, 0.65),
            ],
            beta: 1.0,
            post_call_duration_factor: 0.3,
            stage_growth: 0.2,
            initial_activities: 2,
            activities_per_stage: 2,
            duration_scale: 4000.0,
            pace_range: (0.4, 1.8),
            jitter_range: (0.7, 1.3),
            amount_range: (5_000.0, 50_000.0),
            attribute_pool: None,
        }
    }
}

/// Exogenous draws of one case.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FileCallDraws {
    pub loan_type: String,
    pub requested_amount: f64,
    pub base_tpt: f64,
    /// Unscaled durations of every work activity in trace order.
    pub durations: Vec<f64>,
}

/// Static attributes and durations resampled from a user-supplied log.
#[derive(Clone, Debug, PartialEq)]
pub struct PoolEntry {
    pub loan_type: String,
    pub requested_amount: f64,
    pub durations: Vec<f64>,
}

pub fn pool_hints() -> Vec<ColumnHint> {
    vec![
        ColumnHint::static_attr(LOAN_TYPE, AttrKind::Cat),
        ColumnHint::static_attr(AMOUNT, AttrKind::Num),
        ColumnHint::event(DURATION, AttrKind::Num),
    ]
}

pub fn log_hints() -> Vec<ColumnHint> {
    let mut h = pool_hints();
    h.push(ColumnHint::event(THROUGHPUT, AttrKind::Num));
    h
}

pub fn load_pool(path: &str) -> Result<Vec<PoolEntry>> {
    let log = crate::event_log::load_csv(path, &pool_hints())?;
    let entries: Vec<PoolEntry> = log
        .traces
        .iter()
        .filter_map(|t| {
            let statics = t.static_attrs()?;
            let durations: Vec<f64> =
                t.events.iter().filter_map(|e| e.event_attrs.get(DURATION)?.as_num()).collect();
            (!durations.is_empty()).then(|| PoolEntry {
                loan_type: statics.get(LOAN_TYPE).and_then(Value::as_cat).unwrap_or("unknown").to_string(),
                requested_amount: statics.get(AMOUNT).and_then(Value::as_num).unwrap_or(0.0),
                durations,
            })
        })
        .collect();
    if entries.is_empty() {
        return Err(Error::Config(format!("attribute pool `{path}` has no usable cases")));
    }
    Ok(entries)
}

impl FileCallParams {
    pub fn validate(&self, n_decision_points: usize) -> Result<()> {
        let bad = |m: String| Err(Error::Config(format!("filecall: {m}")));
        if !(2..=6).contains(&n_decision_points) {
            return bad(format!("n_decision_points must be in 2..=6, got {n_decision_points}"));
        }
        if !(self.cost_tpt > 0.0) || !(self.cost_call > 0.0) {
            return bad("cost_tpt and cost_call must be positive".into());
        }
        if !(self.tpt_range.0 < self.tpt_range.1) || self.tpt_range.0 < 0.0 {
            return bad("tpt_range must satisfy 0 <= lo < hi".into());
        }
        if self.loan_types.is_empty()
            || self.loan_types.iter().any(|l| !(l.weight >= 0.0) || !(l.multiplier >= 0.0))
            || self.loan_types.iter().map(|l| l.weight).sum::<f64>() <= 0.0
        {
            return bad("loan types need non-negative weights (positive total) and multipliers".into());
        }
        if !(self.stage_growth > -1.0) {
            return bad("stage_growth must exceed -1".into());
        }
        if !(self.beta >= 0.0) || !(self.post_call_duration_factor > 0.0 && self.post_call_duration_factor <= 1.0) {
            return bad("beta must be >= 0 and post_call_duration_factor in (0, 1]".into());
        }
        if self.initial_activities == 0 || self.activities_per_stage == 0 {
            return bad("activity counts must be positive".into());
        }
        let ordered = |r: (f64, f64)| r.0 <= r.1 && r.0 >= 0.0;
        if !ordered(self.pace_range) || !ordered(self.jitter_range) || !ordered(self.amount_range) {
            return bad("pace, jitter and amount ranges must be ordered and non-negative".into());
        }
        Ok(())
    }

    pub fn n_work_activities(&self, k: usize) -> usize {
        self.initial_activities + self.activities_per_stage * (k - 1)
    }

    /// Prefix length at 1-based decision point `k`.
    pub fn prefix_len(&self, k: usize) -> usize {
        self.initial_activities + (self.activities_per_stage + 1) * (k - 1)
    }

    pub fn multiplier(&self, loan_type: &str) -> f64 {
        self.loan_types.iter().find(|l| l.name == loan_type).map_or(0.0, |l| l.multiplier)
    }

    pub fn call_effect(&self, loan_type: &str, avg_duration: f64) -> f64 {
        self.multiplier(loan_type) * self.beta * avg_duration
    }

    fn draw_range(rng: &mut ChaCha8Rng, r: (f64, f64)) -> f64 {
        if r.0 < r.1 {
            rng.random_range(r.0..=r.1)
        } else {
            r.0
        }
    }

    pub(crate) fn sample(&self, rng: &mut ChaCha8Rng, k: usize, pool: Option<&[PoolEntry]>) -> FileCallDraws {
        let n = self.n_work_activities(k);
        let base_tpt = Self::draw_range(rng, self.tpt_range);
        if let Some(pool) = pool {
            let entry = &pool[rng.random_range(0..pool.len())];
            let durations = (0..n).map(|i| entry.durations[i % entry.durations.len()]).collect();
            return FileCallDraws {
                loan_type: entry.loan_type.clone(),
                requested_amount: entry.requested_amount,
                base_tpt,
                durations,
            };
        }
        let total: f64 = self.loan_types.iter().map(|l| l.weight).sum();
        let mut u = rng.random::<f64>() * total;
        let mut loan_type = &self.loan_types.last().unwrap().name;
        for l in &self.loan_types {
            if u < l.weight {
                loan_type = &l.name;
                break;
            }
            u -= l.weight;
        }
        let requested_amount = Self::draw_range(rng, self.amount_range).round();
        let pace = Self::draw_range(rng, self.pace_range);
        let durations =
            (0..n).map(|_| (self.duration_scale * pace * Self::draw_range(rng, self.jitter_range)).round()).collect();
        FileCallDraws { loan_type: loan_type.clone(), requested_amount, base_tpt, durations }
    }

    /// Events up to the next decision point after `actions`, or the whole trace
    /// when all `k_total` actions are given.
    pub(crate) fn events(&self, case_id: &str, draws: &FileCallDraws, actions: &[usize], k_total: usize) -> Vec<Event> {
        let with_statics = |e: Event| {
            e.with_static(LOAN_TYPE, Value::Cat(draws.loan_type.clone()))
                .with_static(AMOUNT, Value::Num(draws.requested_amount))
        };
        let mut events = Vec::new();
        let mut t = 0.0;
        let mut scale = 1.0;
        let mut dur_sum = 0.0;
        let mut n_dur = 0usize;
        let mut work = 0usize;
        let mut reduction = 0.0;
        let stage_count = |stage: usize| if stage == 0 { self.initial_activities } else { self.activities_per_stage };
        for stage in 0..=actions.len().min(k_total - 1) {
            for j in 0..stage_count(stage) {
                let name = if stage == 0 {
                    INITIAL_ACTIVITIES[j % INITIAL_ACTIVITIES.len()]
                } else {
                    STAGE_ACTIVITIES[j % STAGE_ACTIVITIES.len()]
                };
                let d = (draws.durations[work] * scale * (1.0 + self.stage_growth).powi(stage as i32)).round();
                work += 1;
                t += d;
                dur_sum += d;
                n_dur += 1;
                events.push(with_statics(Event::new(case_id, name, t).with_attr(DURATION, Value::Num(d))));
            }
            let Some(&action) = actions.get(stage) else { break };
            events.push(with_statics(Event::new(case_id, ACTIONS[action], t)));
            if action == CALL {
                reduction += self.call_effect(&draws.loan_type, dur_sum / n_dur as f64);
                scale *= self.post_call_duration_factor;
            }
        }
        if actions.len() == k_total {
            let throughput = (draws.base_tpt - reduction).max(0.0);
            events.push(with_statics(Event::new(case_id, END_ACTIVITY, t).with_attr(THROUGHPUT, Value::Num(throughput))));
        }
        events
    }

    pub fn bank_policy(&self, prefix: Prefix<'_>) -> usize {
        let loan_type = prefix.static_attrs().and_then(|s| s.get(LOAN_TYPE)).and_then(Value::as_cat).unwrap_or("");
        let eligible = self.bank_call_types.iter().any(|t| t == loan_type);
        match prefix.mean_attr(DURATION) {
            Some(avg) if eligible && avg > self.duration_threshold => CALL,
            _ => WAIT,
        }
    }

    pub fn outcome(&self, trace: &Trace) -> f64 {
        let n_calls = trace.events.iter().filter(|e| e.activity == ACTIONS[CALL]).count();
        let throughput = trace
            .events
            .last()
            .and_then(|e| e.event_attrs.get(THROUGHPUT))
            .and_then(Value::as_num)
            .unwrap_or(f64::NAN);
        self.cost_tpt * throughput + n_calls as f64 * self.cost_call
    }
}
