//! End-to-end runs of the command-line binary.

use std::path::Path;
use std::process::{Command, Output};

use lasso_flow::harness::ExperimentReport;
use lasso_flow::LassoProblem;

fn cli(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lasso-flow")).args(args).output().expect("binary runs")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn gen_then_solve_writes_all_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let problem = dir.path().join("p.json");
    let out = cli(&["gen", "--nx", "4", "--m", "8", "--seed", "3", "--out", path(&problem)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let p = LassoProblem::load(&problem).unwrap();
    assert_eq!((p.n_x(), p.m()), (4, 8));

    let sol_dir = dir.path().join("sol");
    let out = cli(&["solve", "--problem", path(&problem), "--tp", "0.5", "--out", path(&sol_dir)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("settled at t = "));
    for f in ["solution.json", "trajectory.csv", "trajectory.svg"] {
        assert!(sol_dir.join(f).is_file(), "{f} missing");
    }
}

#[test]
fn config_file_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("run");
    let cfg = dir.path().join("cfg.json");
    std::fs::write(
        &cfg,
        r#"{"n_x": 3, "m": 6, "n_problems": 4, "seed": 9, "T_p_list": [1.0, 0.5], "write_plots": false}"#,
    )
    .unwrap();
    let out = cli(&["exp1", "--config", path(&cfg), "--n", "2", "--out", path(&out_dir)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report = ExperimentReport::load(out_dir.join("report.json")).unwrap();
    assert_eq!(report.config.n_problems, 2);
    assert_eq!(report.config.n_x, 3);
    assert_eq!(report.runs.len(), 4);
    assert!(!out_dir.join("overlay.svg").exists());
}

#[test]
fn invalid_problem_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let problem = dir.path().join("bad.json");
    std::fs::write(&problem, r#"{"A": [[1.0], [2.0]], "b": [1.0, 0.0], "tau": -1.0, "rho": 0.1}"#).unwrap();
    let out = cli(&["solve", "--problem", path(&problem), "--out", path(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("`tau`"));
}

#[test]
fn unknown_config_field_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"n_problem": 3}"#).unwrap();
    let out = cli(&["exp2", "--config", path(&cfg), "--out", path(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("n_problem"));
}
