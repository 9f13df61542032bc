//! Sweep results and their CSV files.

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};

use super::mean_std_err;

/// One (method, cell, seed) result.
#[derive(Clone, Debug, PartialEq)]
pub struct Row {
    pub method: String,
    pub learner: String,
    pub base_model: String,
    pub delta: f64,
    pub n_train: usize,
    pub n_decision_points: usize,
    pub seed: usize,
    pub total_kpi: f64,
    pub gain_pct: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Aggregate {
    pub method: String,
    pub learner: String,
    pub base_model: String,
    pub delta: f64,
    pub n_train: usize,
    pub n_decision_points: usize,
    pub mean_gain: f64,
    pub std_err: f64,
    pub n_seeds: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Failure {
    pub method: String,
    pub delta: f64,
    pub n_train: usize,
    pub n_decision_points: usize,
    pub seed: usize,
    pub message: String,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SweepReport {
    pub rows: Vec<Row>,
    pub aggregates: Vec<Aggregate>,
    pub failures: Vec<Failure>,
}

impl SweepReport {
    /// Groups rows by (method, learner, base model, cell) in first-seen order.
    pub fn from_rows(rows: Vec<Row>, failures: Vec<Failure>) -> Self {
        let mut order: Vec<(String, String, String, u64, usize, usize)> = Vec::new();
        let mut groups: BTreeMap<(String, String, String, u64, usize, usize), Vec<&Row>> = BTreeMap::new();
        for r in &rows {
            let key = (r.method.clone(), r.learner.clone(), r.base_model.clone(), r.delta.to_bits(), r.n_train, r.n_decision_points);
            let g = groups.entry(key.clone()).or_default();
            if g.is_empty() {
                order.push(key);
            }
            g.push(r);
        }
        let aggregates = order
            .iter()
            .map(|key| {
                let g = &groups[key];
                let gains: Vec<f64> = g.iter().map(|r| r.gain_pct).collect();
                let (mean_gain, std_err) = mean_std_err(&gains);
                let r = g[0];
                Aggregate {
                    method: r.method.clone(),
                    learner: r.learner.clone(),
                    base_model: r.base_model.clone(),
                    delta: r.delta,
                    n_train: r.n_train,
                    n_decision_points: r.n_decision_points,
                    mean_gain,
                    std_err,
                    n_seeds: g.len(),
                }
            })
            .collect();
        SweepReport { rows, aggregates, failures }
    }

    pub fn aggregate(&self, method: &str, delta: f64, n_train: usize, k: usize) -> Option<&Aggregate> {
        self.aggregates
            .iter()
            .find(|a| a.method == method && a.delta == delta && a.n_train == n_train && a.n_decision_points == k)
    }
}

/// Fixed-precision number formatting so reruns are byte-identical.
pub fn fmt_num(v: f64) -> String {
    let s = format!("{v:.6}");
    if s.trim_start_matches('-').chars().all(|c| c == '0' || c == '.') {
        s.trim_start_matches('-').to_string()
    } else {
        s
    }
}

fn fmt_delta(v: f64) -> String {
    format!("{v}")
}

fn writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    csv::Writer::from_path(path).map_err(Error::Csv)
}

pub const ROW_HEADER: [&str; 9] =
    ["method", "learner", "base_model", "delta", "n_train", "n_decision_points", "seed", "total_kpi", "gain_pct"];

pub fn row_record(r: &Row) -> Vec<String> {
    vec![
        r.method.clone(),
        r.learner.clone(),
        r.base_model.clone(),
        fmt_delta(r.delta),
        r.n_train.to_string(),
        r.n_decision_points.to_string(),
        r.seed.to_string(),
        fmt_num(r.total_kpi),
        fmt_num(r.gain_pct),
    ]
}

pub fn write_rows(rows: &[Row], path: &Path) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(ROW_HEADER)?;
    for r in rows {
        w.write_record(row_record(r))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Writes `results.csv`, `aggregate.csv`, `failures.csv` and one
/// `plot_<axis>.csv` per axis with more than one value.
pub fn write_reports(report: &SweepReport, dir: &Path) -> Result<Vec<std::path::PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();

    let path = dir.join("results.csv");
    write_rows(&report.rows, &path)?;
    written.push(path);

    let path = dir.join("aggregate.csv");
    let mut w = writer(&path)?;
    w.write_record([
        "method", "learner", "base_model", "delta", "n_train", "n_decision_points", "mean_gain", "std_err", "n_seeds",
    ])?;
    for a in &report.aggregates {
        w.write_record([
            a.method.clone(),
            a.learner.clone(),
            a.base_model.clone(),
            fmt_delta(a.delta),
            a.n_train.to_string(),
            a.n_decision_points.to_string(),
            fmt_num(a.mean_gain),
            fmt_num(a.std_err),
            a.n_seeds.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;
    written.push(path);

    let path = dir.join("failures.csv");
    let mut w = writer(&path)?;
    w.write_record(["method", "delta", "n_train", "n_decision_points", "seed", "message"])?;
    for f in &report.failures {
        w.write_record([
            f.method.clone(),
            fmt_delta(f.delta),
            f.n_train.to_string(),
            f.n_decision_points.to_string(),
            f.seed.to_string(),
            f.message.clone(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;
    written.push(path);

    for axis in ["delta", "n_train", "n_decision_points"] {
        if let Some(path) = write_plot(report, axis, dir)? {
            written.push(path);
        }
    }
    Ok(written)
}

fn axis_value(a: &Aggregate, axis: &str) -> String {
    match axis {
        "delta" => fmt_delta(a.delta),
        "n_train" => a.n_train.to_string(),
        _ => a.n_decision_points.to_string(),
    }
}

/// Wide table: the other two axes, the x value, then mean and standard error per method.
fn write_plot(report: &SweepReport, axis: &str, dir: &Path) -> Result<Option<std::path::PathBuf>> {
    let axes = ["delta", "n_train", "n_decision_points"];
    let mut xs: Vec<String> = Vec::new();
    let mut methods: Vec<String> = Vec::new();
    for a in &report.aggregates {
        let x = axis_value(a, axis);
        if !xs.contains(&x) {
            xs.push(x);
        }
        if !methods.contains(&a.method) {
            methods.push(a.method.clone());
        }
    }
    if xs.len() < 2 {
        return Ok(None);
    }
    let others: Vec<&str> = axes.iter().copied().filter(|a| *a != axis).collect();
    let mut groups: Vec<Vec<String>> = Vec::new();
    let mut table: BTreeMap<(Vec<String>, String, String), (f64, f64)> = BTreeMap::new();
    for a in &report.aggregates {
        let g: Vec<String> = others.iter().map(|o| axis_value(a, o)).collect();
        if !groups.contains(&g) {
            groups.push(g.clone());
        }
        table.insert((g, axis_value(a, axis), a.method.clone()), (a.mean_gain, a.std_err));
    }
    let path = dir.join(format!("plot_{axis}.csv"));
    let mut w = writer(&path)?;
    let mut header: Vec<String> = others.iter().map(|s| s.to_string()).collect();
    header.push(axis.to_string());
    for m in &methods {
        header.push(format!("{m}_mean"));
        header.push(format!("{m}_se"));
    }
    w.write_record(&header)?;
    for g in &groups {
        for x in &xs {
            let mut rec = g.clone();
            rec.push(x.clone());
            let mut any = false;
            for m in &methods {
                match table.get(&(g.clone(), x.clone(), m.clone())) {
                    Some((mean, se)) => {
                        any = true;
                        rec.push(fmt_num(*mean));
                        rec.push(fmt_num(*se));
                    }
                    None => {
                        rec.push(String::new());
                        rec.push(String::new());
                    }
                }
            }
            if any {
                w.write_record(&rec)?;
            }
        }
    }
    w.flush().map_err(|e| Error::io(&path, e))?;
    Ok(Some(path))
}
