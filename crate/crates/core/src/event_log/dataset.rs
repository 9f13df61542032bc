use serde::{Deserialize, Serialize};

use super::{EventLog, Prefix, Trace};
use crate::error::{Error, Result};

/// Where the action taken at a decision point is recorded.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ActionAttr {
    /// The activity label of the action event is the action.
    Activity,
    /// A categorical event attribute of the action event carries the action.
    Event(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecisionPointSpec {
    /// 1-based decision point index.
    pub index: usize,
    /// Number of events observed before the action; the action is event `prefix_len + 1`.
    pub prefix_len: usize,
    pub actions: Vec<String>,
    pub action_attr: ActionAttr,
}

impl DecisionPointSpec {
    pub fn n_actions(&self) -> usize {
        self.actions.len()
    }

    pub fn action_index(&self, label: &str) -> Option<usize> {
        self.actions.iter().position(|a| a == label)
    }

    /// Reads the action label from the event right after the prefix.
    pub fn observed_label<'t>(&self, trace: &'t Trace) -> Option<&'t str> {
        let event = trace.events.get(self.prefix_len)?;
        match &self.action_attr {
            ActionAttr::Activity => Some(event.activity.as_str()),
            ActionAttr::Event(name) => event.event_attrs.get(name).and_then(|v| v.as_cat()),
        }
    }
}

/// Checks indices run 1..K, prefix lengths strictly increase and every action
/// space has at least two actions. With a log, also checks the action attribute exists.
pub fn validate_specs(specs: &[DecisionPointSpec], log: Option<&EventLog>) -> Result<()> {
    if specs.is_empty() {
        return Err(Error::InvalidSpec("no decision points".into()));
    }
    for (i, spec) in specs.iter().enumerate() {
        if spec.index != i + 1 {
            return Err(Error::InvalidSpec(format!("decision point {} has index {}", i + 1, spec.index)));
        }
        if spec.actions.len() < 2 {
            return Err(Error::InvalidSpec(format!("decision point {} has fewer than 2 actions", spec.index)));
        }
        let mut sorted = spec.actions.clone();
        sorted.sort();
        sorted.dedup();
        if sorted.len() != spec.actions.len() {
            return Err(Error::InvalidSpec(format!("decision point {} repeats an action", spec.index)));
        }
        if i > 0 && spec.prefix_len <= specs[i - 1].prefix_len {
            return Err(Error::InvalidSpec("prefix lengths must strictly increase".into()));
        }
        if let (Some(log), ActionAttr::Event(name)) = (log, &spec.action_attr) {
            if !log.has_event_attr(name) {
                return Err(Error::InvalidSpec(format!("action attribute `{name}` not in log")));
            }
        }
    }
    Ok(())
}

/// One (case, decision point) observation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    /// Index of the case's trace in the dataset log.
    pub case: usize,
    /// 1-based decision point.
    pub k: usize,
    /// Index into the decision point's action space.
    pub action: usize,
    pub outcome: f64,
}

/// Per-decision-point samples over an event log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    log: EventLog,
    specs: Vec<DecisionPointSpec>,
    samples: Vec<Sample>,
    outcomes: Vec<f64>,
}

/// Unrolls every trace into one sample per decision point it reaches. A trace
/// reaches `k` when it has at least `l_k + 1` events.
pub fn build_dataset<F>(log: &EventLog, specs: &[DecisionPointSpec], outcome_fn: F) -> Result<Dataset>
where
    F: Fn(&Trace) -> f64,
{
    validate_specs(specs, Some(log))?;
    let mut samples = Vec::new();
    let mut outcomes = Vec::with_capacity(log.n_cases());
    for (case, trace) in log.traces.iter().enumerate() {
        let y = outcome_fn(trace);
        if !y.is_finite() {
            return Err(Error::NonFinite(format!("outcome of case {}", trace.case_id)));
        }
        outcomes.push(y);
        for spec in specs {
            if trace.len() < spec.prefix_len + 1 {
                break;
            }
            let label = spec.observed_label(trace).unwrap_or("");
            let action = spec.action_index(label).ok_or_else(|| Error::UnknownAction {
                case: trace.case_id.clone(),
                k: spec.index,
                action: label.to_string(),
            })?;
            samples.push(Sample { case, k: spec.index, action, outcome: y });
        }
    }
    Ok(Dataset { log: log.clone(), specs: specs.to_vec(), samples, outcomes })
}

impl Dataset {
    pub fn log(&self) -> &EventLog {
        &self.log
    }

    pub fn specs(&self) -> &[DecisionPointSpec] {
        &self.specs
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn outcomes(&self) -> &[f64] {
        &self.outcomes
    }

    pub fn n_cases(&self) -> usize {
        self.log.n_cases()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn spec(&self, k: usize) -> &DecisionPointSpec {
        &self.specs[k - 1]
    }

    pub fn samples_at(&self, k: usize) -> impl Iterator<Item = &Sample> {
        self.samples.iter().filter(move |s| s.k == k)
    }

    pub fn prefix(&self, sample: &Sample) -> Prefix<'_> {
        let len = self.specs[sample.k - 1].prefix_len;
        self.log.traces[sample.case].prefix(len).expect("sample prefix within trace")
    }

    /// The dataset restricted to cases `range` (by position), re-indexed from 0.
    pub fn subset_cases(&self, range: std::ops::Range<usize>) -> Dataset {
        let start = range.start;
        let log = EventLog::new(self.log.traces[range.clone()].to_vec());
        let samples = self
            .samples
            .iter()
            .filter(|s| range.contains(&s.case))
            .map(|s| Sample { case: s.case - start, ..s.clone() })
            .collect();
        Dataset {
            log,
            specs: self.specs.clone(),
            samples,
            outcomes: self.outcomes[range].to_vec(),
        }
    }
}
