//! Prefix encodings.
//!
//! Per event the raw features are the activity label, two time-derived values
//! (elapsed time since case start, time since the previous event) and the
//! event attributes. Flat mode keeps the time features of the last event,
//! averages numeric attributes and counts categories; sequence mode emits one
//! row per event, front-padded with zero rows.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{Attributes, Dataset, Event, Prefix, Value};
use crate::error::{Error, Result};

const STD_EPS: f64 = 1e-12;
const TIME_ELAPSED: &str = "elapsed";
const TIME_SINCE_PREV: &str = "since_prev";

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EncodingMode {
    #[default]
    Flat,
    Sequence,
}

/// A standardized continuous feature.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NumFeature {
    pub name: String,
    pub mean: f64,
    pub std: f64,
}

impl NumFeature {
    fn standardize(&self, v: f64) -> f64 {
        (v - self.mean) / self.std
    }
}

/// A one-hot encoded categorical feature; position in `categories` is the slot.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CatFeature {
    pub name: String,
    pub categories: Vec<String>,
}

impl CatFeature {
    fn slot(&self, value: &str) -> Option<usize> {
        self.categories.binary_search_by(|c| c.as_str().cmp(value)).ok()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Encoded {
    Flat(Vec<f64>),
    Sequence { rows: Vec<Vec<f64>>, statics: Vec<f64> },
}

impl Encoded {
    /// Flat vector; sequence encodings are concatenated row by row with the
    /// static block last.
    pub fn into_vector(self) -> Vec<f64> {
        match self {
            Encoded::Flat(v) => v,
            Encoded::Sequence { rows, statics } => rows.into_iter().flatten().chain(statics).collect(),
        }
    }
}

/// Fitted encoder state. Categories are sorted; numeric statistics come from
/// the training prefixes only.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureSchema {
    pub activity: CatFeature,
    pub time: Vec<NumFeature>,
    pub event_num: Vec<NumFeature>,
    pub event_cat: Vec<CatFeature>,
    pub static_num: Vec<NumFeature>,
    pub static_cat: Vec<CatFeature>,
    /// Constant continuous features that were removed, as `scope:name`.
    pub dropped: Vec<String>,
    pub max_seq_len: usize,
}

#[derive(Default)]
struct Moments {
    n: usize,
    sum: f64,
    sum_sq: f64,
}

impl Moments {
    fn push(&mut self, v: f64) {
        self.n += 1;
        self.sum += v;
        self.sum_sq += v * v;
    }
}

#[derive(Default)]
struct Collector {
    num: BTreeMap<String, Moments>,
    cat: BTreeMap<String, BTreeSet<String>>,
}

impl Collector {
    fn push_attrs(&mut self, attrs: &Attributes) {
        for (name, value) in attrs {
            match value {
                Value::Num(v) => self.num.entry(name.clone()).or_default().push(*v),
                Value::Cat(c) => {
                    self.cat.entry(name.clone()).or_default().insert(c.clone());
                }
            }
        }
    }

    fn finish(self, scope: &str, dropped: &mut Vec<String>) -> (Vec<NumFeature>, Vec<CatFeature>) {
        let num = finish_num(self.num, scope, dropped);
        let cat = self
            .cat
            .into_iter()
            .map(|(name, cats)| CatFeature { name, categories: cats.into_iter().collect() })
            .collect();
        (num, cat)
    }
}

fn finish_num(stats: BTreeMap<String, Moments>, scope: &str, dropped: &mut Vec<String>) -> Vec<NumFeature> {
    let mut out = Vec::new();
    for (name, m) in stats {
        let mean = m.sum / m.n as f64;
        let var = (m.sum_sq / m.n as f64 - mean * mean).max(0.0);
        let std = var.sqrt();
        if std > STD_EPS * mean.abs().max(1.0) {
            out.push(NumFeature { name, mean, std });
        } else {
            dropped.push(format!("{scope}:{name}"));
        }
    }
    out
}

fn time_values(events: &[Event], i: usize) -> [f64; 2] {
    let t = events[i].timestamp;
    let elapsed = t - events[0].timestamp;
    let since_prev = if i == 0 { 0.0 } else { t - events[i - 1].timestamp };
    [elapsed, since_prev]
}

/// Fits a schema with the sequence length set to the longest sampled prefix.
pub fn fit_schema(dataset: &Dataset) -> Result<FeatureSchema> {
    fit_schema_with(dataset, None)
}

pub fn fit_schema_with(dataset: &Dataset, max_seq_len: Option<usize>) -> Result<FeatureSchema> {
    if dataset.is_empty() {
        return Err(Error::Empty("cannot fit a feature schema on an empty dataset".into()));
    }
    // Each event is counted once: use the longest sampled prefix of every case.
    let mut longest: BTreeMap<usize, usize> = BTreeMap::new();
    for s in dataset.samples() {
        let len = dataset.spec(s.k).prefix_len;
        let e = longest.entry(s.case).or_insert(0);
        *e = (*e).max(len);
    }
    let mut activities = BTreeSet::new();
    let mut time: BTreeMap<String, Moments> = BTreeMap::new();
    let mut events = Collector::default();
    let mut statics = Collector::default();
    for (&case, &len) in &longest {
        let evs = &dataset.log().traces[case].events[..len];
        for (i, e) in evs.iter().enumerate() {
            activities.insert(e.activity.clone());
            let [elapsed, since_prev] = time_values(evs, i);
            time.entry(TIME_ELAPSED.into()).or_default().push(elapsed);
            time.entry(TIME_SINCE_PREV.into()).or_default().push(since_prev);
            events.push_attrs(&e.event_attrs);
        }
        if let Some(first) = evs.first() {
            statics.push_attrs(&first.static_attrs);
        }
    }
    let mut dropped = Vec::new();
    let time = finish_num(time, "time", &mut dropped);
    let (event_num, event_cat) = events.finish("event", &mut dropped);
    let (static_num, static_cat) = statics.finish("static", &mut dropped);
    let max_seq_len = max_seq_len.unwrap_or_else(|| longest.values().copied().max().unwrap_or(1)).max(1);
    Ok(FeatureSchema {
        activity: CatFeature { name: "activity".into(), categories: activities.into_iter().collect() },
        time,
        event_num,
        event_cat,
        static_num,
        static_cat,
        dropped,
        max_seq_len,
    })
}

impl FeatureSchema {
    fn event_width(&self) -> usize {
        self.activity.categories.len()
            + self.time.len()
            + self.event_num.len()
            + self.event_cat.iter().map(|c| c.categories.len()).sum::<usize>()
    }

    fn static_width(&self) -> usize {
        self.static_num.len() + self.static_cat.iter().map(|c| c.categories.len()).sum::<usize>()
    }

    pub fn width(&self, mode: EncodingMode) -> usize {
        match mode {
            EncodingMode::Flat => self.event_width() + self.static_width(),
            EncodingMode::Sequence => self.max_seq_len * self.event_width() + self.static_width(),
        }
    }

    pub fn encode(&self, prefix: Prefix<'_>, mode: EncodingMode) -> Encoded {
        match mode {
            EncodingMode::Flat => Encoded::Flat(self.encode_flat(prefix)),
            EncodingMode::Sequence => {
                let evs = prefix.events();
                let start = evs.len().saturating_sub(self.max_seq_len);
                let mut rows = vec![vec![0.0; self.event_width()]; self.max_seq_len - (evs.len() - start)];
                rows.extend((start..evs.len()).map(|i| self.event_row(evs, i)));
                Encoded::Sequence { rows, statics: self.static_block(prefix.static_attrs()) }
            }
        }
    }

    pub fn encode_vector(&self, prefix: Prefix<'_>, mode: EncodingMode) -> Vec<f64> {
        self.encode(prefix, mode).into_vector()
    }

    fn event_row(&self, evs: &[Event], i: usize) -> Vec<f64> {
        let e = &evs[i];
        let mut row = Vec::with_capacity(self.event_width());
        push_one_hot(&mut row, &self.activity, Some(e.activity.as_str()));
        row.extend(self.time_block(evs, i));
        for f in &self.event_num {
            row.push(e.event_attrs.get(&f.name).and_then(Value::as_num).map_or(0.0, |v| f.standardize(v)));
        }
        for f in &self.event_cat {
            push_one_hot(&mut row, f, e.event_attrs.get(&f.name).and_then(Value::as_cat));
        }
        row
    }

    fn time_block(&self, evs: &[Event], i: usize) -> Vec<f64> {
        let raw = time_values(evs, i);
        self.time
            .iter()
            .map(|f| {
                let v = if f.name == TIME_ELAPSED { raw[0] } else { raw[1] };
                f.standardize(v)
            })
            .collect()
    }

    fn encode_flat(&self, prefix: Prefix<'_>) -> Vec<f64> {
        let evs = prefix.events();
        let mut out = Vec::with_capacity(self.width(EncodingMode::Flat));
        let base = out.len();
        out.resize(base + self.activity.categories.len(), 0.0);
        for e in evs {
            if let Some(slot) = self.activity.slot(&e.activity) {
                out[base + slot] += 1.0;
            }
        }
        if evs.is_empty() {
            out.extend(std::iter::repeat_n(0.0, self.time.len()));
        } else {
            out.extend(self.time_block(evs, evs.len() - 1));
        }
        for f in &self.event_num {
            let (sum, n) = evs
                .iter()
                .filter_map(|e| e.event_attrs.get(&f.name).and_then(Value::as_num))
                .fold((0.0, 0usize), |(s, n), v| (s + f.standardize(v), n + 1));
            out.push(if n == 0 { 0.0 } else { sum / n as f64 });
        }
        for f in &self.event_cat {
            let base = out.len();
            out.resize(base + f.categories.len(), 0.0);
            for e in evs {
                if let Some(slot) = e.event_attrs.get(&f.name).and_then(Value::as_cat).and_then(|c| f.slot(c)) {
                    out[base + slot] += 1.0;
                }
            }
        }
        out.extend(self.static_block(prefix.static_attrs()));
        out
    }

    fn static_block(&self, attrs: Option<&Attributes>) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.static_width());
        for f in &self.static_num {
            out.push(attrs.and_then(|a| a.get(&f.name)).and_then(Value::as_num).map_or(0.0, |v| f.standardize(v)));
        }
        for f in &self.static_cat {
            push_one_hot(&mut out, f, attrs.and_then(|a| a.get(&f.name)).and_then(Value::as_cat));
        }
        out
    }
}

fn push_one_hot(out: &mut Vec<f64>, feature: &CatFeature, value: Option<&str>) {
    let base = out.len();
    out.resize(base + feature.categories.len(), 0.0);
    if let Some(slot) = value.and_then(|v| feature.slot(v)) {
        out[base + slot] = 1.0;
    }
}
