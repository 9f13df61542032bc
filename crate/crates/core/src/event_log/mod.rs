//! Event-log data model, decision-point datasets and prefix encodings.
//!
//! A log is a set of events grouped into traces by case id. A prefix is the
//! first `l` events of a trace; a decision point `k` fixes the prefix length
//! `l_k` after which an action is taken, and the action is read from event
//! `l_k + 1`.

mod csv_io;
mod dataset;
mod encoding;

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use csv_io::{load_csv, read_csv, write_csv};
pub use dataset::{build_dataset, validate_specs, ActionAttr, Dataset, DecisionPointSpec, Sample};
pub use encoding::{fit_schema, fit_schema_with, CatFeature, Encoded, EncodingMode, FeatureSchema, NumFeature};

/// An attribute value: numeric or categorical.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Value {
    Num(f64),
    Cat(String),
}

impl Value {
    pub fn as_num(&self) -> Option<f64> {
        match self {
            Value::Num(v) => Some(*v),
            Value::Cat(_) => None,
        }
    }

    pub fn as_cat(&self) -> Option<&str> {
        match self {
            Value::Cat(s) => Some(s),
            Value::Num(_) => None,
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Num(v) => write!(f, "{v}"),
            Value::Cat(s) => f.write_str(s),
        }
    }
}

pub type Attributes = BTreeMap<String, Value>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub case_id: String,
    pub activity: String,
    pub timestamp: f64,
    pub event_attrs: Attributes,
    pub static_attrs: Attributes,
}

impl Event {
    pub fn new(case_id: impl Into<String>, activity: impl Into<String>, timestamp: f64) -> Self {
        Event {
            case_id: case_id.into(),
            activity: activity.into(),
            timestamp,
            event_attrs: Attributes::new(),
            static_attrs: Attributes::new(),
        }
    }

    pub fn with_attr(mut self, name: impl Into<String>, value: Value) -> Self {
        self.event_attrs.insert(name.into(), value);
        self
    }

    pub fn with_static(mut self, name: impl Into<String>, value: Value) -> Self {
        self.static_attrs.insert(name.into(), value);
        self
    }
}

/// All events of one case in timestamp order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub case_id: String,
    pub events: Vec<Event>,
}

impl Trace {
    /// Builds a trace, checking timestamp order and static-attribute consistency.
    pub fn new(case_id: impl Into<String>, events: Vec<Event>) -> Result<Self> {
        let case_id = case_id.into();
        for pair in events.windows(2) {
            if pair[1].timestamp < pair[0].timestamp {
                return Err(Error::NonMonotonicTimestamps {
                    case: case_id,
                    previous: pair[0].timestamp,
                    next: pair[1].timestamp,
                });
            }
            if pair[1].static_attrs != pair[0].static_attrs {
                let attr = pair[0]
                    .static_attrs
                    .keys()
                    .chain(pair[1].static_attrs.keys())
                    .find(|k| pair[0].static_attrs.get(*k) != pair[1].static_attrs.get(*k))
                    .cloned()
                    .unwrap_or_default();
                return Err(Error::InconsistentStatic { case: case_id, attr });
            }
        }
        Ok(Trace { case_id, events })
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// The first `len` events, or `None` if the trace is shorter.
    pub fn prefix(&self, len: usize) -> Option<Prefix<'_>> {
        (len <= self.events.len()).then(|| Prefix { events: &self.events[..len] })
    }

    pub fn static_attrs(&self) -> Option<&Attributes> {
        self.events.first().map(|e| &e.static_attrs)
    }
}

/// The first `len()` events of a trace.
#[derive(Clone, Copy, Debug)]
pub struct Prefix<'a> {
    events: &'a [Event],
}

impl<'a> Prefix<'a> {
    pub fn new(events: &'a [Event]) -> Self {
        Prefix { events }
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn events(&self) -> &'a [Event] {
        self.events
    }

    pub fn last(&self) -> Option<&'a Event> {
        self.events.last()
    }

    pub fn static_attrs(&self) -> Option<&'a Attributes> {
        self.events.first().map(|e| &e.static_attrs)
    }

    /// Mean of a numeric event attribute over the events that carry it.
    pub fn mean_attr(&self, name: &str) -> Option<f64> {
        let (sum, n) = self
            .events
            .iter()
            .filter_map(|e| e.event_attrs.get(name).and_then(Value::as_num))
            .fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
        (n > 0).then(|| sum / n as f64)
    }
}

/// Observed events grouped into traces.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EventLog {
    pub traces: Vec<Trace>,
}

impl EventLog {
    pub fn new(traces: Vec<Trace>) -> Self {
        EventLog { traces }
    }

    /// Groups events by case id in order of first appearance. Events of one case
    /// must already be in non-decreasing timestamp order.
    pub fn from_events(events: impl IntoIterator<Item = Event>) -> Result<Self> {
        let mut index: HashMap<String, usize> = HashMap::new();
        let mut grouped: Vec<(String, Vec<Event>)> = Vec::new();
        for event in events {
            let slot = *index.entry(event.case_id.clone()).or_insert_with(|| {
                grouped.push((event.case_id.clone(), Vec::new()));
                grouped.len() - 1
            });
            grouped[slot].1.push(event);
        }
        let traces = grouped
            .into_iter()
            .map(|(id, evs)| Trace::new(id, evs))
            .collect::<Result<Vec<_>>>()?;
        Ok(EventLog { traces })
    }

    pub fn n_events(&self) -> usize {
        self.traces.iter().map(Trace::len).sum()
    }

    pub fn n_cases(&self) -> usize {
        self.traces.len()
    }

    pub fn events(&self) -> impl Iterator<Item = &Event> {
        self.traces.iter().flat_map(|t| t.events.iter())
    }

    pub fn has_event_attr(&self, name: &str) -> bool {
        self.events().any(|e| e.event_attrs.contains_key(name))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum AttrScope {
    Event,
    Static,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum AttrKind {
    Num,
    Cat,
}

/// Declares the role and type of one extra CSV column, written `event:<name>:<num|cat>`
/// or `static:<name>:<num|cat>`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnHint {
    pub scope: AttrScope,
    pub name: String,
    pub kind: AttrKind,
}

impl ColumnHint {
    pub fn event(name: &str, kind: AttrKind) -> Self {
        ColumnHint { scope: AttrScope::Event, name: name.to_string(), kind }
    }

    pub fn static_attr(name: &str, kind: AttrKind) -> Self {
        ColumnHint { scope: AttrScope::Static, name: name.to_string(), kind }
    }
}

impl FromStr for ColumnHint {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        let [scope, name, kind] = parts.as_slice() else {
            return Err(Error::Schema(format!("column hint `{s}` is not scope:name:kind")));
        };
        let scope = match *scope {
            "event" => AttrScope::Event,
            "static" => AttrScope::Static,
            other => return Err(Error::Schema(format!("unknown column scope `{other}`"))),
        };
        let kind = match *kind {
            "num" => AttrKind::Num,
            "cat" => AttrKind::Cat,
            other => return Err(Error::Schema(format!("unknown column kind `{other}`"))),
        };
        if name.is_empty() {
            return Err(Error::Schema("empty column name in hint".into()));
        }
        Ok(ColumnHint { scope, name: name.to_string(), kind })
    }
}

impl fmt::Display for ColumnHint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let scope = match self.scope {
            AttrScope::Event => "event",
            AttrScope::Static => "static",
        };
        let kind = match self.kind {
            AttrKind::Num => "num",
            AttrKind::Cat => "cat",
        };
        write!(f, "{scope}:{}:{kind}", self.name)
    }
}
