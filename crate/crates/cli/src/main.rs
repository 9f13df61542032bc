use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};

use scope_core::config::{validate, ExperimentConfig, Method, Severity};
use scope_core::eval::report::{row_record, write_rows, ROW_HEADER};
use scope_core::eval::{evaluate_policy, gain, write_reports, Cell, Experiment, PolicyArtifact};
use scope_core::event_log::write_csv;
use scope_core::selftest;

#[derive(Parser, Debug)]
#[command(name = "scope", version, about = "Sequential intervention policies from event logs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    opts: Opts,
}

#[derive(Args, Debug)]
struct Opts {
    /// Experiment config (TOML); built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; overrides `out_dir` of the config.
    #[arg(long, global = true, env = "SCOPE_OUT_DIR")]
    out_dir: Option<PathBuf>,
    /// Master seed; overrides `seed` of the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; defaults to the number of cells, capped by the available cores.
    #[arg(long, global = true, env = "SCOPE_JOBS")]
    jobs: Option<usize>,
    /// Method for `train`, or a comma-separated list for `sweep`.
    #[arg(long, global = true)]
    method: Option<String>,
    /// Cell selection, e.g. `delta=0.95,n_train=2000,k=3,seed=0`.
    #[arg(long, global = true)]
    cell: Option<String>,
    /// Policy artifact written by `train` and read by `evaluate`.
    #[arg(long, global = true)]
    policy: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write the training log of one cell and seed as CSV.
    Simulate,
    /// Fit one method on one cell and seed and save the policy.
    Train,
    /// Evaluate a saved policy on the cell's test set.
    Evaluate,
    /// Run the whole grid and write the report CSVs.
    Sweep,
    /// Run the built-in oracle checks.
    Selftest,
    /// Check a config without running anything.
    Validate,
}

/// Failures mapped to exit codes: 1 for configuration, 2 for runtime.
#[derive(Debug)]
enum Failure {
    Config(anyhow::Error),
    Runtime(anyhow::Error),
}

type Outcome<T> = std::result::Result<T, Failure>;

fn config_err(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Config(e.into())
}

fn runtime_err(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Runtime(e.into())
}

/// Core errors caused by the config itself count as config errors.
fn classify(e: scope_core::Error) -> Failure {
    match e {
        scope_core::Error::Config(_) | scope_core::Error::Hyperparameter(_) => config_err(e),
        _ => runtime_err(e),
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
struct CellSpec {
    delta: Option<f64>,
    n_train: Option<usize>,
    n_decision_points: Option<usize>,
    seed: Option<usize>,
}

fn parse_cell(s: &str) -> anyhow::Result<CellSpec> {
    let mut spec = CellSpec::default();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let (key, value) = part.split_once('=').with_context(|| format!("--cell: `{part}` is not axis=value"))?;
        let bad = || format!("--cell: invalid value for {key}: `{value}`");
        match key.trim() {
            "delta" => spec.delta = Some(value.trim().parse().with_context(bad)?),
            "n_train" => spec.n_train = Some(value.trim().parse().with_context(bad)?),
            "k" | "n_decision_points" => spec.n_decision_points = Some(value.trim().parse().with_context(bad)?),
            "seed" => spec.seed = Some(value.trim().parse().with_context(bad)?),
            other => anyhow::bail!("--cell: unknown axis `{other}` (expected delta, n_train, k, seed)"),
        }
    }
    Ok(spec)
}

fn cell_name(cell: &Cell, seed: usize) -> String {
    format!("delta={},n_train={},k={},seed={}", cell.delta, cell.n_train, cell.n_decision_points, seed)
}

fn load_config(opts: &Opts) -> Outcome<ExperimentConfig> {
    let mut cfg = match &opts.config {
        Some(path) => ExperimentConfig::load(path).map_err(|e| config_err(anyhow::Error::new(e).context(format!("{}", path.display()))))?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = opts.seed {
        cfg.seed = seed;
    }
    if let Some(dir) = &opts.out_dir {
        cfg.out_dir = dir.to_string_lossy().into_owned();
    }
    Ok(cfg)
}

/// Narrows the axes to the ones named in `--cell`.
fn restrict_axes(cfg: &mut ExperimentConfig, spec: &CellSpec) {
    if let Some(d) = spec.delta {
        cfg.axes.delta = vec![d];
    }
    if let Some(n) = spec.n_train {
        cfg.axes.n_train = vec![n];
    }
    if let Some(k) = spec.n_decision_points {
        cfg.axes.n_decision_points = vec![k];
    }
}

fn experiment(cfg: ExperimentConfig) -> Outcome<Experiment> {
    Experiment::new(cfg).map_err(classify)
}

/// The single cell and seed addressed by `--cell`; unspecified axes take their first configured value.
fn single_cell(opts: &Opts, cfg: &mut ExperimentConfig) -> Outcome<(Cell, usize)> {
    let spec = opts.cell.as_deref().map(parse_cell).transpose().map_err(config_err)?.unwrap_or_default();
    restrict_axes(cfg, &spec);
    let first = |name: &str, n: usize| if n == 0 { Err(config_err(anyhow::anyhow!("axes.{name} is empty"))) } else { Ok(()) };
    first("delta", cfg.axes.delta.len())?;
    first("n_train", cfg.axes.n_train.len())?;
    first("n_decision_points", cfg.axes.n_decision_points.len())?;
    let cell = Cell { delta: cfg.axes.delta[0], n_train: cfg.axes.n_train[0], n_decision_points: cfg.axes.n_decision_points[0] };
    let seed = spec.seed.unwrap_or(0);
    if seed >= cfg.n_seeds {
        return Err(config_err(anyhow::anyhow!("--cell: seed {seed} is out of range (n_seeds = {})", cfg.n_seeds)));
    }
    Ok((cell, seed))
}

fn out_dir(cfg: &ExperimentConfig) -> Outcome<PathBuf> {
    let dir = PathBuf::from(&cfg.out_dir);
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display())).map_err(runtime_err)?;
    Ok(dir)
}

fn policy_path(opts: &Opts, dir: &Path) -> PathBuf {
    opts.policy.clone().unwrap_or_else(|| dir.join("policy.json"))
}

fn default_jobs(n_cells: usize) -> usize {
    let cores = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
    n_cells.clamp(1, cores)
}

fn simulate(opts: &Opts) -> Outcome<()> {
    let mut cfg = load_config(opts)?;
    let (cell, seed) = single_cell(opts, &mut cfg)?;
    let exp = experiment(cfg)?;
    let sim = exp.simulator(&cell).map_err(classify)?;
    let log = exp.train_log(&sim, &cell, seed).map_err(classify)?;
    let dir = out_dir(&exp.config)?;
    let path = dir.join("log.csv");
    let file = File::create(&path).with_context(|| format!("creating {}", path.display())).map_err(runtime_err)?;
    write_csv(&log.log, &sim.column_hints(), BufWriter::new(file)).map_err(classify)?;
    println!("wrote {} cases ({}) to {}", log.cases.len(), cell_name(&cell, seed), path.display());
    Ok(())
}

fn train(opts: &Opts) -> Outcome<()> {
    let mut cfg = load_config(opts)?;
    let (cell, seed) = single_cell(opts, &mut cfg)?;
    let name = opts.method.clone().unwrap_or_else(|| "scope-s".to_string());
    let method: Method = name.parse().map_err(|e: scope_core::Error| config_err(anyhow::Error::new(e).context("--method")))?;
    if method == Method::UpperBound {
        return Err(config_err(anyhow::anyhow!("--method: upper-bound is a reference, not a trainable policy")));
    }
    cfg.methods = vec![method.to_string()];
    let exp = experiment(cfg)?;
    let sim = exp.simulator(&cell).map_err(classify)?;
    let log = exp.train_log(&sim, &cell, seed).map_err(classify)?;
    let artifact = exp
        .fit(method, &sim, &cell, seed, &log)
        .map_err(|e| runtime_err(anyhow::Error::new(e).context(format!("training {method} on {}", cell_name(&cell, seed)))))?;
    let dir = out_dir(&exp.config)?;
    let path = policy_path(opts, &dir);
    artifact.save(&method.to_string(), &path).map_err(classify)?;
    println!("trained {method} on {} -> {}", cell_name(&cell, seed), path.display());
    Ok(())
}

fn evaluate(opts: &Opts) -> Outcome<()> {
    let mut cfg = load_config(opts)?;
    let (cell, seed) = single_cell(opts, &mut cfg)?;
    let dir = PathBuf::from(&cfg.out_dir);
    let path = policy_path(opts, &dir);
    let (name, artifact) = PolicyArtifact::load(&path).map_err(|e| config_err(anyhow::Error::new(e).context(format!("{}", path.display()))))?;
    let method: Method = name.parse().map_err(config_err)?;
    cfg.methods = vec![method.to_string()];
    let exp = experiment(cfg)?;
    let sim = exp.simulator(&cell).map_err(classify)?;
    let test = exp.test_cases(&sim, &cell);
    let refs = exp.references(&sim, &test).map_err(classify)?;
    let policy = artifact.policy(&sim);
    let total = evaluate_policy(&sim, policy.as_ref(), &test)
        .map_err(|e| runtime_err(anyhow::Error::new(e).context(format!("evaluating on {}", cell_name(&cell, seed)))))?;
    let g = gain(total, refs.bank, sim.direction()).map_err(runtime_err)?;
    let row = exp.row(method, &cell, seed, total, g);
    let dir = out_dir(&exp.config)?;
    let out = dir.join("evaluation.csv");
    write_rows(std::slice::from_ref(&row), &out).map_err(classify)?;
    println!("{}", ROW_HEADER.join(","));
    println!("{}", row_record(&row).join(","));
    Ok(())
}

fn sweep(opts: &Opts) -> Outcome<()> {
    let mut cfg = load_config(opts)?;
    if let Some(spec) = opts.cell.as_deref() {
        let spec = parse_cell(spec).map_err(config_err)?;
        if spec.seed.is_some() {
            return Err(config_err(anyhow::anyhow!("--cell: sweep runs every seed; drop `seed=`")));
        }
        restrict_axes(&mut cfg, &spec);
    }
    if let Some(m) = &opts.method {
        cfg.methods = m.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect();
    }
    let exp = experiment(cfg)?;
    let jobs = opts.jobs.unwrap_or_else(|| default_jobs(exp.cells().len()));
    let report = exp.run(jobs, None).map_err(classify)?;
    let dir = out_dir(&exp.config)?;
    let written = write_reports(&report, &dir).map_err(classify)?;
    for a in &report.aggregates {
        println!(
            "{:<12} delta={:<5} n_train={:<6} k={} gain={:>9.3}% se={:.3}",
            a.method, a.delta, a.n_train, a.n_decision_points, a.mean_gain, a.std_err
        );
    }
    for p in &written {
        println!("wrote {}", p.display());
    }
    if !report.failures.is_empty() {
        for f in &report.failures {
            eprintln!(
                "failed: {} at delta={},n_train={},k={},seed={}: {}",
                f.method, f.delta, f.n_train, f.n_decision_points, f.seed, f.message
            );
        }
        return Err(runtime_err(anyhow::anyhow!("{} (method, cell, seed) runs failed; see failures.csv", report.failures.len())));
    }
    Ok(())
}

fn run_selftest() -> Outcome<()> {
    let checks = selftest::run_all();
    for c in &checks {
        println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    let failed = checks.iter().filter(|c| !c.passed).count();
    if failed > 0 {
        return Err(runtime_err(anyhow::anyhow!("{failed} selftest checks failed")));
    }
    Ok(())
}

fn validate_cmd(opts: &Opts) -> Outcome<()> {
    let cfg = load_config(opts)?;
    let diags = validate(&cfg);
    for d in &diags {
        println!("{d}");
    }
    let errors = diags.iter().filter(|d| d.severity == Severity::Error).count();
    if errors > 0 {
        return Err(config_err(anyhow::anyhow!("{errors} config errors")));
    }
    if diags.is_empty() {
        println!("ok");
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Simulate => simulate(&cli.opts),
        Command::Train => train(&cli.opts),
        Command::Evaluate => evaluate(&cli.opts),
        Command::Sweep => sweep(&cli.opts),
        Command::Selftest => run_selftest(),
        Command::Validate => validate_cmd(&cli.opts),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(e)) => {
            eprintln!("config error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
