//! The experiment grid: cells, shared test sets, per-seed training and reports.

use rayon::prelude::*;

use super::artifact::PolicyArtifact;
use super::report::{Failure, Row, SweepReport};
use super::{evaluate_policy, gain, kmeans_q_scores, sample_kmeans_q, sample_model, tune};
use crate::baselines::{train_kmeans_q, train_sep, upper_bound, KMeansQParams, RandomPolicy};
use crate::config::{has_errors, validate, ExperimentConfig, Method};
use crate::error::{Error, Result};
use crate::event_log::{build_dataset, Dataset};
use crate::policy::Direction;
use crate::rng::{self, derive_seed};
use crate::scope::{self, LearnerConfig};
use crate::simulators::{BankPolicy, GeneratedLog, SimCase, SimConfig, Simulator};

/// One point of the grid.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Cell {
    pub delta: f64,
    pub n_train: usize,
    pub n_decision_points: usize,
}

impl Cell {
    fn group_path(&self) -> [u64; 2] {
        [self.n_decision_points as u64, self.delta.to_bits()]
    }

    fn path(&self, seed: usize) -> [u64; 4] {
        [self.n_decision_points as u64, self.delta.to_bits(), self.n_train as u64, seed as u64]
    }
}

/// Totals of the seed-independent references on a test set.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct References {
    pub bank: f64,
    pub upper_bound: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub methods: Vec<Method>,
}

impl Experiment {
    /// Validates the config; errors are joined into one message.
    pub fn new(config: ExperimentConfig) -> Result<Self> {
        let diags = validate(&config);
        if has_errors(&diags) {
            let msg: Vec<String> = diags.iter().filter(|d| d.severity == crate::config::Severity::Error).map(|d| d.to_string()).collect();
            return Err(Error::Config(msg.join("; ")));
        }
        let methods = config.parsed_methods()?;
        Ok(Experiment { config, methods })
    }

    /// Grid order: decision points, then delta, then training size.
    pub fn cells(&self) -> Vec<Cell> {
        let a = &self.config.axes;
        let mut out = Vec::new();
        for &k in &a.n_decision_points {
            for &delta in &a.delta {
                for &n_train in &a.n_train {
                    out.push(Cell { delta, n_train, n_decision_points: k });
                }
            }
        }
        out
    }

    pub fn simulator(&self, cell: &Cell) -> Result<Simulator> {
        Simulator::new(SimConfig {
            n_decision_points: cell.n_decision_points,
            delta: cell.delta,
            seed: self.config.seed,
            params: self.config.simulator.clone(),
        })
    }

    /// The test set shared by all methods, seeds and training sizes of a (delta, K) group.
    pub fn test_cases(&self, sim: &Simulator, cell: &Cell) -> Vec<SimCase> {
        sim.cases("test", &cell.group_path(), self.config.test_cases)
    }

    /// Training log of seed `seed`; smaller training sets are prefixes of larger ones.
    pub fn train_log(&self, sim: &Simulator, cell: &Cell, seed: usize) -> Result<GeneratedLog> {
        let p = cell.path(seed);
        sim.generate("train", &[p[0], p[1], p[3]], cell.n_train)
    }

    fn dataset(sim: &Simulator, log: &GeneratedLog) -> Result<Dataset> {
        build_dataset(&log.log, sim.specs(), |t| sim.outcome(t))
    }

    pub fn references(&self, sim: &Simulator, cases: &[SimCase]) -> Result<References> {
        let bank = evaluate_policy(sim, &BankPolicy(sim), cases)?;
        let upper_bound = if self.methods.contains(&Method::UpperBound) {
            Some(upper_bound(sim, cases, self.config.upper_bound_cap as u128)?)
        } else {
            None
        };
        Ok(References { bank, upper_bound })
    }

    fn model_seed(&self, cell: &Cell, seed: usize) -> u64 {
        derive_seed(self.config.seed, "model", &cell.path(seed))
    }

    fn signed(direction: Direction, total: f64) -> f64 {
        match direction {
            Direction::Maximize => total,
            Direction::Minimize => -total,
        }
    }

    fn split(&self, log: &GeneratedLog) -> (usize, usize) {
        let n = log.cases.len();
        let n_val = ((n as f64) * self.config.tuning.validation_fraction).round() as usize;
        let n_val = n_val.clamp(1, n.saturating_sub(1).max(1));
        (n - n_val, n)
    }

    fn learned(&self, method: Method, ds: &Dataset, cfg: &LearnerConfig, dir: Direction, seed: u64) -> Result<PolicyArtifact> {
        let policy = match method {
            Method::Scope(_) => scope::train(ds, cfg, dir, seed)?,
            _ => train_sep(ds, cfg, dir, seed)?,
        };
        Ok(PolicyArtifact::Learned { policy })
    }

    /// Trains `method` on the seed's log, with random-search tuning when enabled.
    pub fn fit(&self, method: Method, sim: &Simulator, cell: &Cell, seed: usize, log: &GeneratedLog) -> Result<PolicyArtifact> {
        let dir = sim.direction();
        let model_seed = self.model_seed(cell, seed);
        let tuning = &self.config.tuning;
        match method {
            Method::Bank => Ok(PolicyArtifact::Bank),
            Method::UpperBound => Err(Error::Config("upper-bound is not a policy".into())),
            Method::Random => Ok(PolicyArtifact::Random {
                policy: RandomPolicy::new(sim.specs(), derive_seed(self.config.seed, "random", &cell.path(seed))),
            }),
            Method::Scope(kind) | Method::Sep(kind) => {
                let ds = Self::dataset(sim, log)?;
                let mut cfg = self.config.learner.learner_config(kind);
                if tuning.n_trials > 0 {
                    let (n_fit, n) = self.split(log);
                    let fit_ds = ds.subset_cases(0..n_fit);
                    let val = &log.cases[n_fit..n];
                    let mut r = rng::stream(self.config.seed, "tuning", &cell.path(seed));
                    let base = cfg.base.clone();
                    let space = tuning.space.clone();
                    let (best, _) = tune(
                        tuning.n_trials,
                        &mut r,
                        |r| sample_model(&space, &base, r),
                        |spec| {
                            let mut c = cfg.clone();
                            c.base = spec.clone();
                            let art = self.learned(method, &fit_ds, &c, dir, model_seed)?;
                            let policy = art.policy(sim);
                            let total = evaluate_policy(sim, policy.as_ref(), val)?;
                            Ok(Self::signed(dir, total))
                        },
                    )?;
                    cfg.base = best;
                }
                self.learned(method, &ds, &cfg, dir, model_seed)
            }
            Method::KMeansQ => {
                let ds = Self::dataset(sim, log)?;
                let mut params = self.config.kmeans_q.clone();
                if tuning.n_trials > 0 {
                    params = self.tune_kmeans_q(sim, cell, seed, log, &ds, &params)?;
                }
                Ok(PolicyArtifact::KMeansQ { policy: train_kmeans_q(&ds, &params, dir, model_seed)? })
            }
        }
    }

    fn tune_kmeans_q(
        &self,
        sim: &Simulator,
        cell: &Cell,
        seed: usize,
        log: &GeneratedLog,
        ds: &Dataset,
        base: &KMeansQParams,
    ) -> Result<KMeansQParams> {
        let dir = sim.direction();
        let (n_fit, n) = self.split(log);
        let fit_ds = ds.subset_cases(0..n_fit);
        let val = &log.cases[n_fit..n];
        let mut r = rng::stream(self.config.seed, "tuning-kmeans-q", &cell.path(seed));
        let n_trials = 2 * self.config.tuning.n_trials;
        let candidates: Vec<KMeansQParams> =
            (0..n_trials).map(|_| sample_kmeans_q(&self.config.tuning.space, base, &mut r)).collect();
        let mut sils = Vec::with_capacity(n_trials);
        let mut rewards = Vec::with_capacity(n_trials);
        for p in &candidates {
            match train_kmeans_q(&fit_ds, p, dir, self.model_seed(cell, seed)) {
                Ok(policy) => {
                    let total = evaluate_policy(sim, &policy, val)?;
                    sils.push(policy.silhouette);
                    rewards.push(Self::signed(dir, total) / val.len() as f64);
                }
                Err(_) => {
                    sils.push(f64::NAN);
                    rewards.push(f64::NAN);
                }
            }
        }
        let scores = kmeans_q_scores(&sils, &rewards);
        let best = super::best_trial(&scores).ok_or_else(|| Error::Hyperparameter("every KMeans-Q trial failed".into()))?;
        Ok(candidates[best].clone())
    }

    pub fn row(&self, method: Method, cell: &Cell, seed: usize, total: f64, gain_pct: f64) -> Row {
        let (learner, base_model) = match method {
            Method::Scope(k) | Method::Sep(k) => (k.to_string(), self.config.learner.base.name().to_string()),
            Method::KMeansQ => ("-".to_string(), "kmeans".to_string()),
            _ => ("-".to_string(), "-".to_string()),
        };
        Row {
            method: method.to_string(),
            learner,
            base_model,
            delta: cell.delta,
            n_train: cell.n_train,
            n_decision_points: cell.n_decision_points,
            seed,
            total_kpi: total,
            gain_pct,
        }
    }

    fn failure(method: &str, cell: &Cell, seed: usize, e: &Error) -> Failure {
        Failure {
            method: method.to_string(),
            delta: cell.delta,
            n_train: cell.n_train,
            n_decision_points: cell.n_decision_points,
            seed,
            message: e.to_string(),
        }
    }

    /// Total KPI of one method for one seed, given the group's references.
    pub fn method_total(
        &self,
        method: Method,
        sim: &Simulator,
        cell: &Cell,
        seed: usize,
        log: Option<&GeneratedLog>,
        test: &[SimCase],
        refs: &References,
    ) -> Result<f64> {
        match method {
            Method::Bank => Ok(refs.bank),
            Method::UpperBound => refs.upper_bound.ok_or_else(|| Error::Config("upper bound not computed".into())),
            _ => {
                let owned;
                let log = match log {
                    Some(l) => l,
                    None => {
                        owned = self.train_log(sim, cell, seed)?;
                        &owned
                    }
                };
                let art = self.fit(method, sim, cell, seed, log)?;
                let policy = art.policy(sim);
                let total = evaluate_policy(sim, policy.as_ref(), test)?;
                Ok(total)
            }
        }
    }

    fn run_seed(&self, cell: &Cell, seed: usize, sim: &Simulator, test: &[SimCase], refs: &References) -> (Vec<Row>, Vec<Failure>) {
        let mut rows = Vec::new();
        let mut failures = Vec::new();
        let needs_log = self.methods.iter().any(|m| !matches!(m, Method::Bank | Method::UpperBound));
        let log = if needs_log {
            match self.train_log(sim, cell, seed) {
                Ok(l) => Some(l),
                Err(e) => {
                    failures.push(Self::failure("*", cell, seed, &e));
                    return (rows, failures);
                }
            }
        } else {
            None
        };
        for &m in &self.methods {
            let result = self
                .method_total(m, sim, cell, seed, log.as_ref(), test, refs)
                .and_then(|total| gain(total, refs.bank, sim.direction()).map(|g| (total, g)));
            match result {
                Ok((total, g)) => rows.push(self.row(m, cell, seed, total, g)),
                Err(e) => failures.push(Self::failure(&m.to_string(), cell, seed, &e)),
            }
        }
        (rows, failures)
    }

    /// Runs the selected cells (all when `only` is `None`) on `jobs` worker threads.
    pub fn run(&self, jobs: usize, only: Option<&[Cell]>) -> Result<SweepReport> {
        let cells: Vec<Cell> = only.map(|c| c.to_vec()).unwrap_or_else(|| self.cells());
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs.max(1))
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
        pool.install(|| {
            let prepared: Vec<std::result::Result<(Simulator, Vec<SimCase>, References), Error>> = cells
                .par_iter()
                .map(|cell| {
                    let sim = self.simulator(cell)?;
                    let test = self.test_cases(&sim, cell);
                    let refs = self.references(&sim, &test)?;
                    Ok((sim, test, refs))
                })
                .collect();
            let tasks: Vec<(usize, usize)> =
                (0..cells.len()).flat_map(|c| (0..self.config.n_seeds).map(move |s| (c, s))).collect();
            let results: Vec<(Vec<Row>, Vec<Failure>)> = tasks
                .par_iter()
                .map(|&(c, s)| match &prepared[c] {
                    Ok((sim, test, refs)) => self.run_seed(&cells[c], s, sim, test, refs),
                    Err(e) => (Vec::new(), vec![Self::failure("*", &cells[c], s, e)]),
                })
                .collect();
            let mut rows = Vec::new();
            let mut failures = Vec::new();
            for (r, f) in results {
                rows.extend(r);
                failures.extend(f);
            }
            Ok(SweepReport::from_rows(rows, failures))
        })
    }
}
