use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use scope_core::config::ExperimentConfig;
use scope_core::eval::{Cell, Experiment};
use scope_core::event_log::read_csv;
use scope_core::simulators::BankPolicy;

fn example() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/example.toml")
}

fn scope(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_scope"))
        .args(args)
        .env_remove("SCOPE_OUT_DIR")
        .env_remove("SCOPE_JOBS")
        .output()
        .unwrap()
}

fn text(o: &Output) -> String {
    format!("{}{}", String::from_utf8_lossy(&o.stdout), String::from_utf8_lossy(&o.stderr))
}

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let p = dir.join("cfg.toml");
    std::fs::write(&p, body).unwrap();
    p
}

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    let mut r = csv::Reader::from_path(path).unwrap();
    r.records().map(|rec| rec.unwrap().iter().map(String::from).collect()).collect()
}

#[test]
fn validate_example_is_clean() {
    let o = scope(&["validate", "--config", example().to_str().unwrap()]);
    assert!(o.status.success(), "{}", text(&o));
}

#[test]
fn validate_reports_errors_and_warnings() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "methods = [\"scope-s\", \"magic\"]\n[axes]\ndelta = [1.2]\n");
    let o = scope(&["validate", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let t = text(&o);
    assert!(t.contains("axes.delta"), "{t}");
    assert!(t.contains("magic"), "{t}");

    let cfg = write_config(dir.path(), "methods = [\"bank\"]\n[axes]\nn_decision_points = [7]\n");
    let o = scope(&["validate", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", text(&o));
    assert!(text(&o).contains("2^7"), "{}", text(&o));
}

#[test]
fn config_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "sed = 3\n");
    let o = scope(&["sweep", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(text(&o).contains("sed"), "{}", text(&o));

    let o = scope(&["train", "--config", example().to_str().unwrap(), "--cell", "colour=3"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(text(&o).contains("colour"));

    let o = scope(&["train", "--config", example().to_str().unwrap(), "--method", "upper-bound"]);
    assert_eq!(o.status.code(), Some(1));

    let o = scope(&["frobnicate"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn simulate_full_confounding_follows_bank_policy() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o = scope(&[
        "simulate",
        "--config",
        example().to_str().unwrap(),
        "--out-dir",
        out.to_str().unwrap(),
        "--cell",
        "delta=1,n_train=10,k=3",
    ]);
    assert!(o.status.success(), "{}", text(&o));

    let mut cfg = ExperimentConfig::load(example()).unwrap();
    cfg.axes.delta = vec![1.0];
    cfg.axes.n_train = vec![10];
    cfg.axes.n_decision_points = vec![3];
    let exp = Experiment::new(cfg).unwrap();
    let cell = Cell { delta: 1.0, n_train: 10, n_decision_points: 3 };
    let sim = exp.simulator(&cell).unwrap();
    let log = read_csv(std::fs::File::open(out.join("log.csv")).unwrap(), &sim.column_hints()).unwrap();
    assert_eq!(log.traces.len(), 10);

    let generated = exp.train_log(&sim, &cell, 0).unwrap();
    for (trace, case) in log.traces.iter().zip(&generated.cases) {
        assert_eq!(trace.case_id, case.id);
        let logged: Vec<&str> =
            trace.events.iter().map(|e| e.activity.as_str()).filter(|a| *a == "call" || *a == "wait").collect();
        let (bank, _, _) = sim.play(case, &BankPolicy(&sim)).unwrap();
        let expected: Vec<&str> = bank.iter().map(|&a| if a == 1 { "call" } else { "wait" }).collect();
        assert_eq!(logged, expected);
    }
}

#[test]
fn train_then_evaluate_matches_sweep() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = example();
    let cfg = cfg.to_str().unwrap();
    let sweep_dir = dir.path().join("sweep");
    let o = scope(&[
        "sweep",
        "--config",
        cfg,
        "--out-dir",
        sweep_dir.to_str().unwrap(),
        "--cell",
        "delta=0.9,k=3",
        "--method",
        "scope-s,kmeans-q,bank",
    ]);
    assert!(o.status.success(), "{}", text(&o));
    let rows = csv_rows(&sweep_dir.join("results.csv"));

    for method in ["scope-s", "kmeans-q", "bank"] {
        for seed in 0..2 {
            let run_dir = dir.path().join(format!("{method}-{seed}"));
            let cell = format!("delta=0.9,k=3,seed={seed}");
            let o = scope(&["train", "--config", cfg, "--out-dir", run_dir.to_str().unwrap(), "--cell", &cell, "--method", method]);
            assert!(o.status.success(), "{}", text(&o));
            let o = scope(&["evaluate", "--config", cfg, "--out-dir", run_dir.to_str().unwrap(), "--cell", &cell]);
            assert!(o.status.success(), "{}", text(&o));
            let eval = csv_rows(&run_dir.join("evaluation.csv"));
            assert_eq!(eval.len(), 1);
            let swept = rows.iter().find(|r| r[0] == method && r[6] == seed.to_string()).unwrap();
            assert_eq!(&eval[0], swept, "{method} seed {seed}");
        }
    }
}

#[test]
fn sweep_writes_the_full_grid_reproducibly() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let out = dir.path().join(name);
        let o = Command::new(env!("CARGO_BIN_EXE_scope"))
            .args(["sweep", "--config", example().to_str().unwrap()])
            .env("SCOPE_OUT_DIR", &out)
            .env("SCOPE_JOBS", "3")
            .output()
            .unwrap();
        assert!(o.status.success(), "{}", text(&o));
        out
    };
    let a = run("a");
    let cfg = ExperimentConfig::load(example()).unwrap();
    let n_cells = cfg.axes.delta.len() * cfg.axes.n_train.len() * cfg.axes.n_decision_points.len();
    let n_methods = cfg.methods.len();
    assert_eq!(csv_rows(&a.join("results.csv")).len(), n_cells * n_methods * cfg.n_seeds);
    assert_eq!(csv_rows(&a.join("aggregate.csv")).len(), n_cells * n_methods);
    assert!(csv_rows(&a.join("failures.csv")).is_empty());
    // Two axes vary, so two plot files.
    assert_eq!(csv_rows(&a.join("plot_delta.csv")).len(), n_cells);
    assert!(a.join("plot_n_decision_points.csv").exists());
    assert!(!a.join("plot_n_train.csv").exists());

    let b = run("b");
    for f in ["results.csv", "aggregate.csv", "failures.csv", "plot_delta.csv", "plot_n_decision_points.csv"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn seed_flag_changes_results() {
    let dir = tempfile::tempdir().unwrap();
    let run = |seed: &str| {
        let out = dir.path().join(seed);
        let o = scope(&[
            "sweep",
            "--config",
            example().to_str().unwrap(),
            "--out-dir",
            out.to_str().unwrap(),
            "--seed",
            seed,
            "--cell",
            "delta=0.9,k=2",
            "--method",
            "bank,random",
        ]);
        assert!(o.status.success(), "{}", text(&o));
        std::fs::read(out.join("results.csv")).unwrap()
    };
    assert_ne!(run("1"), run("2"));
}

#[test]
fn selftest_passes() {
    let o = scope(&["selftest"]);
    assert!(o.status.success(), "{}", text(&o));
    let t = text(&o);
    assert!(t.lines().filter(|l| l.starts_with("PASS")).count() >= 8, "{t}");
    assert!(!t.contains("FAIL"));
}
