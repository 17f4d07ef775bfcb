//! Batch runs, trajectory CSVs, reports and plots.

use std::collections::HashSet;
use std::path::Path;

use lasso_flow::harness::output::csv_rows;
use lasso_flow::harness::plot::svg_document;
use lasso_flow::harness::{
    export_csv, gen_instance, load_csv, render_svg, run_experiment_1, run_experiment_2, run_flow, ExperimentConfig,
    ExperimentKind, ExperimentReport, Plot, RunSettings, Series,
};
use lasso_flow::oracle::solve_prox;
use lasso_flow::{build_nnqp, Error};

fn small(kind: ExperimentKind, dir: &Path) -> ExperimentConfig {
    let base = match kind {
        ExperimentKind::InitialConditions => ExperimentConfig::initial_conditions(),
        _ => ExperimentConfig::prescribed_times(),
    };
    ExperimentConfig {
        n_x: 4,
        m: 8,
        n_problems: 3,
        seed: 5,
        output_dir: dir.to_path_buf(),
        ..base
    }
}

/// y coordinates of every polyline, in document order.
fn polylines(svg: &str) -> Vec<Vec<f64>> {
    svg.lines()
        .filter(|l| l.contains("class=\"curve\""))
        .map(|l| {
            let pts = l.split("points=\"").nth(1).unwrap().split('"').next().unwrap();
            pts.split(' ').map(|p| p.split(',').nth(1).unwrap().parse().unwrap()).collect()
        })
        .collect()
}

#[test]
fn csv_round_trips_and_ends_settled() {
    let p = gen_instance(5, 10, 1.0, 0.1, 3).unwrap();
    let x_star = solve_prox(&p, 1e-10, 1_000_000).unwrap().x;
    let nnqp = build_nnqp(&p);
    let (traj, _) = run_flow(&nnqp, &x_star, 1.0, 1.0, &RunSettings::default()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.csv");
    export_csv(&traj, &x_star, &path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    assert_eq!(text.lines().next().unwrap(), "t,residual_norm,error_vs_oracle,min_z,min_w");
    let rows = load_csv(&path).unwrap();
    assert_eq!(rows.len(), traj.samples.len());
    assert_eq!(rows, csv_rows(&traj, &x_star));
    let settle = traj.settle_time.unwrap();
    for r in rows.iter().filter(|r| r.t >= settle) {
        assert!(r.residual_norm <= 1e-10);
    }
}

#[test]
fn export_reports_the_failing_path() {
    let p = gen_instance(2, 3, 1.0, 0.1, 0).unwrap();
    let nnqp = build_nnqp(&p);
    let x = solve_prox(&p, 1e-10, 100_000).unwrap().x;
    let (traj, _) = run_flow(&nnqp, &x, 1.0, 1.0, &RunSettings::default()).unwrap();
    let err = export_csv(&traj, &x, "/nonexistent-dir/t.csv").unwrap_err();
    assert!(matches!(&err, Error::Io { path, .. } if path.ends_with("t.csv")), "{err}");
}

#[test]
fn experiment_one_covers_every_pair_once_and_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small(ExperimentKind::PrescribedTimes, dir.path());
    let report = run_experiment_1(&cfg).unwrap();
    assert_eq!(report.schema_version, 1);
    assert_eq!(report.runs.len(), 3 * 6);
    let pairs: HashSet<(usize, u64)> = report.runs.iter().map(|r| (r.problem_id, r.t_p.to_bits())).collect();
    assert_eq!(pairs.len(), report.runs.len());
    for r in &report.runs {
        assert!(r.error.is_none(), "{:?}", r.error);
        assert!(dir.path().join(r.csv.as_ref().unwrap()).is_file());
        let o = r.outcome.as_ref().unwrap();
        assert!(o.settle_time.unwrap() <= r.t_p);
        assert!(o.final_error_inf <= 1e-6);
    }
    assert!(report.aggregate.passed);
    assert_eq!(ExperimentReport::load(dir.path().join("report.json")).unwrap(), report);

    let svg = std::fs::read_to_string(dir.path().join("p000.svg")).unwrap();
    assert_eq!(svg.matches("class=\"curve\"").count(), 6);
    assert_eq!(svg.matches("class=\"tp-marker\"").count(), 6);
    let overlay = std::fs::read_to_string(dir.path().join("overlay.svg")).unwrap();
    assert_eq!(overlay.matches("class=\"curve\"").count(), 18);
    assert_eq!(overlay.matches("class=\"legend\"").count(), 6);
}

#[test]
fn batches_are_deterministic_and_experiments_share_the_unit_start() {
    let (d1, d2, d3) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let a = run_experiment_1(&small(ExperimentKind::PrescribedTimes, d1.path())).unwrap();
    run_experiment_1(&small(ExperimentKind::PrescribedTimes, d2.path())).unwrap();
    for r in &a.runs {
        let name = r.csv.as_ref().unwrap();
        assert_eq!(std::fs::read(d1.path().join(name)).unwrap(), std::fs::read(d2.path().join(name)).unwrap());
    }
    let b = run_experiment_2(&small(ExperimentKind::InitialConditions, d3.path())).unwrap();
    assert_eq!(b.runs.len(), 3 * 6);
    for id in 0..3 {
        let one = a.runs.iter().find(|r| r.problem_id == id && r.t_p == 1.0).unwrap();
        let unit = b.runs.iter().find(|r| r.problem_id == id && r.init_scale == 1.0).unwrap();
        let csv_a = std::fs::read(d1.path().join(one.csv.as_ref().unwrap())).unwrap();
        let csv_b = std::fs::read(d3.path().join(unit.csv.as_ref().unwrap())).unwrap();
        assert_eq!(csv_a, csv_b);
    }
    let settle: Vec<f64> = b
        .runs
        .iter()
        .filter(|r| r.problem_id == 0)
        .map(|r| r.outcome.as_ref().unwrap().settle_time.unwrap())
        .collect();
    assert!(settle.windows(2).all(|w| w[0] < w[1]) && settle[5] <= 1.0, "{settle:?}");
}

#[test]
fn experiment_kind_must_match() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small(ExperimentKind::PrescribedTimes, dir.path());
    assert!(matches!(run_experiment_2(&cfg), Err(Error::InvalidArgument { name: "experiment", .. })));
}

#[test]
fn residual_curves_render_monotone() {
    let p = gen_instance(6, 12, 1.0, 0.1, 21).unwrap();
    let nnqp = build_nnqp(&p);
    let x = solve_prox(&p, 1e-10, 1_000_000).unwrap().x;
    let series = [1.0, 0.4]
        .iter()
        .map(|&t_p| {
            let (traj, _) = run_flow(&nnqp, &x, t_p, 1.0, &RunSettings::default()).unwrap();
            Series {
                label: format!("T_p = {t_p}"),
                points: traj.samples.iter().map(|s| (s.t, s.residual_norm)).collect(),
            }
        })
        .collect();
    let plot = Plot {
        title: "residual".into(),
        y_label: "‖u‖".into(),
        series,
        markers: vec![1.0, 0.4],
    };
    // svg y grows downward, so a nonincreasing curve has nondecreasing y
    for ys in polylines(&svg_document(&plot).unwrap()) {
        assert!(ys.windows(2).all(|w| w[1] >= w[0]));
    }
}

#[test]
fn empty_plot_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("empty.svg");
    let plot = Plot {
        series: vec![Series {
            label: "none".into(),
            points: vec![],
        }],
        ..Plot::default()
    };
    assert!(matches!(render_svg(&plot, &path), Err(Error::EmptyData(_))));
    assert!(!path.exists());
}
