//! Batch experiments over seeded random instances.

use std::path::{Path, PathBuf};

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::acceptance::{NONNEGATIVITY_FLOOR, SETTLE_PREDICTION_TOL, SOLUTION_TOL};
use super::analysis::{error_curve, norm_law_deviation, ray_drift};
use super::config::{ExperimentConfig, ExperimentKind};
use super::instance::{gen_instance, instance_seed};
use super::output::export_csv;
use super::plot::{render_svg, Plot, Series};
use crate::error::{Error, Result};
use crate::flow::{analytic_settling_time, kkt_residual, FlowParams, FlowState};
use crate::integrate::{integrate_flow, uniform_samples, Trajectory};
use crate::oracle::solve_prox;
use crate::problem::{build_nnqp, LassoProblem, NnqpProblem, Solution};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Measurements of one successful integration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunOutcome {
    pub k: f64,
    pub initial_residual_norm: f64,
    pub predicted_settle_time: f64,
    pub settle_time: Option<f64>,
    pub final_error_inf: f64,
    pub final_error_2: f64,
    pub final_residual_norm: f64,
    pub min_z: f64,
    pub min_w: f64,
    pub norm_law_deviation: f64,
    pub ray_drift: f64,
    pub steps: usize,
    pub rejected_steps: usize,
    pub linear_solves: usize,
    pub fallback_solves: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub problem_id: usize,
    pub seed: u64,
    pub t_p: f64,
    pub init_scale: f64,
    /// Trajectory CSV, relative to the output directory.
    pub csv: Option<String>,
    pub outcome: Option<RunOutcome>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriterionCheck {
    pub name: String,
    /// `None` when no finite value exists, e.g. a run never settled.
    pub measured: Option<f64>,
    pub threshold: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub runs: usize,
    pub failed_runs: usize,
    pub unsettled_runs: usize,
    pub max_final_error_inf: f64,
    pub max_settle_time: Option<f64>,
    pub max_settle_over_t_p: Option<f64>,
    pub max_settle_prediction_error: Option<f64>,
    pub min_state_entry: Option<f64>,
    pub max_norm_law_deviation: f64,
    pub max_ray_drift: f64,
    pub checks: Vec<CriterionCheck>,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub schema_version: u32,
    pub experiment: ExperimentKind,
    pub config: ExperimentConfig,
    pub runs: Vec<RunRecord>,
    pub aggregate: Aggregate,
    pub notes: Vec<String>,
}

impl ExperimentReport {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|source| Error::Json {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self).expect("report serializes");
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn outcomes(&self) -> impl Iterator<Item = &RunOutcome> {
        self.runs.iter().filter_map(|r| r.outcome.as_ref())
    }
}

/// Integration settings shared by every run of a batch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunSettings {
    pub rtol: f64,
    pub atol: f64,
    pub eps_stop: f64,
    pub n_samples: usize,
}

impl RunSettings {
    pub fn from_config(c: &ExperimentConfig) -> Self {
        RunSettings {
            rtol: c.rtol,
            atol: c.atol,
            eps_stop: c.eps_stop,
            n_samples: c.n_samples,
        }
    }
}

impl Default for RunSettings {
    fn default() -> Self {
        RunSettings::from_config(&ExperimentConfig::default())
    }
}

/// Integrate from `init_scale · 1` with settling time `t_p` and measure
/// the result against `x_star`.
pub fn run_flow(
    nnqp: &NnqpProblem,
    x_star: &DVector<f64>,
    t_p: f64,
    init_scale: f64,
    settings: &RunSettings,
) -> Result<(Trajectory, RunOutcome)> {
    let params = FlowParams::from_settling_time(t_p)?
        .with_tolerances(settings.rtol, settings.atol)
        .with_eps_stop(settings.eps_stop);
    let init = FlowState::uniform(nnqp.dim(), init_scale)?;
    let r0 = kkt_residual(nnqp, &init)?.norm;
    let traj = integrate_flow(nnqp, &init, &params, &uniform_samples(t_p, settings.n_samples))?;
    let last = traj.final_sample();
    let dx = &last.x - x_star;
    let outcome = RunOutcome {
        k: params.k,
        initial_residual_norm: r0,
        predicted_settle_time: analytic_settling_time(r0, params.k),
        settle_time: traj.settle_time,
        final_error_inf: dx.amax(),
        final_error_2: dx.norm(),
        final_residual_norm: last.residual_norm,
        min_z: traj.min_z(),
        min_w: traj.min_w(),
        norm_law_deviation: norm_law_deviation(&traj, params.k, params.eps_stop),
        ray_drift: ray_drift(nnqp, &traj, params.eps_stop)?,
        steps: traj.stats.steps,
        rejected_steps: traj.stats.rejected_steps,
        linear_solves: traj.stats.linear_solves,
        fallback_solves: traj.stats.fallback_solves,
    };
    Ok((traj, outcome))
}

fn csv_name(id: usize, t_p: f64, scale: f64) -> String {
    format!("p{id:03}_tp{t_p}_init{scale}.csv")
}

fn series_label(kind: ExperimentKind, t_p: f64, scale: f64) -> String {
    match kind {
        ExperimentKind::InitialConditions => format!("init {scale}·1"),
        _ => format!("T_p = {t_p}"),
    }
}

struct InstanceRuns {
    records: Vec<RunRecord>,
    curves: Vec<Series>,
}

fn run_instance(config: &ExperimentConfig, id: usize, out_dir: &Path) -> InstanceRuns {
    let seed = instance_seed(config.seed, id);
    let settings = RunSettings::from_config(config);
    let record = |t_p, init_scale| RunRecord {
        problem_id: id,
        seed,
        t_p,
        init_scale,
        csv: None,
        outcome: None,
        error: None,
    };
    let prepared = gen_instance(config.n_x, config.m, config.tau, config.rho, seed).and_then(|p| {
        let oracle = solve_prox(&p, config.oracle_tol, config.oracle_max_iter)?;
        if !oracle.converged {
            return Err(Error::OracleNotConverged {
                iterations: oracle.iterations,
                residual: f64::NAN,
            });
        }
        Ok((build_nnqp(&p), oracle.x))
    });
    let mut runs = InstanceRuns {
        records: Vec::new(),
        curves: Vec::new(),
    };
    for (t_p, scale) in config.settings() {
        let mut rec = record(t_p, scale);
        let result = prepared.as_ref().map_err(|e| e.to_string()).and_then(|(nnqp, x_star)| {
            let (traj, outcome) = run_flow(nnqp, x_star, t_p, scale, &settings).map_err(|e| e.to_string())?;
            let name = csv_name(id, t_p, scale);
            export_csv(&traj, x_star, out_dir.join(&name)).map_err(|e| e.to_string())?;
            let errors = error_curve(&traj, x_star);
            let points = traj.samples.iter().zip(errors).map(|(s, e)| (s.t, e)).collect();
            Ok((name, outcome, points))
        });
        match result {
            Ok((name, outcome, points)) => {
                rec.csv = Some(name);
                rec.outcome = Some(outcome);
                runs.curves.push(Series {
                    label: series_label(config.experiment, t_p, scale),
                    points,
                });
            }
            Err(e) => rec.error = Some(e),
        }
        runs.records.push(rec);
    }
    runs
}

fn aggregate(config: &ExperimentConfig, runs: &[RunRecord]) -> Aggregate {
    let outcomes: Vec<(&RunRecord, &RunOutcome)> =
        runs.iter().filter_map(|r| r.outcome.as_ref().map(|o| (r, o))).collect();
    let fold_max = |f: &dyn Fn(&RunRecord, &RunOutcome) -> f64| outcomes.iter().map(|(r, o)| f(r, o)).fold(0.0, f64::max);
    let failed_runs = runs.len() - outcomes.len();
    let unsettled_runs = outcomes.iter().filter(|(_, o)| o.settle_time.is_none()).count();
    let settle = |o: &RunOutcome| o.settle_time.unwrap_or(f64::INFINITY);
    let max_final_error_inf = fold_max(&|_, o| o.final_error_inf);
    let max_settle_time = fold_max(&|_, o| settle(o));
    let max_settle_over_t_p = outcomes.iter().map(|(r, o)| settle(o) - r.t_p).fold(f64::NEG_INFINITY, f64::max);
    let max_settle_prediction_error = fold_max(&|_, o| (settle(o) - o.predicted_settle_time).abs());
    let min_state_entry = outcomes.iter().map(|(_, o)| o.min_z.min(o.min_w)).fold(f64::INFINITY, f64::min);
    let check = |name: &str, measured: f64, threshold: f64, passed: bool| CriterionCheck {
        name: name.into(),
        measured: finite(measured),
        threshold,
        passed: passed && failed_runs == 0,
    };
    let mut checks = vec![
        check("final_error_inf <= threshold", max_final_error_inf, SOLUTION_TOL, max_final_error_inf <= SOLUTION_TOL),
        check("settle_time - T_p <= 0", max_settle_over_t_p, 0.0, unsettled_runs == 0 && max_settle_over_t_p <= 0.0),
        check("min z, w >= threshold", min_state_entry, NONNEGATIVITY_FLOOR, min_state_entry >= NONNEGATIVITY_FLOOR),
    ];
    if config.experiment == ExperimentKind::InitialConditions {
        checks.push(check(
            "|settle - predicted settle| <= threshold",
            max_settle_prediction_error,
            SETTLE_PREDICTION_TOL,
            max_settle_prediction_error <= SETTLE_PREDICTION_TOL,
        ));
    }
    Aggregate {
        runs: runs.len(),
        failed_runs,
        unsettled_runs,
        max_final_error_inf,
        max_settle_time: finite(max_settle_time),
        max_settle_over_t_p: finite(max_settle_over_t_p),
        max_settle_prediction_error: finite(max_settle_prediction_error),
        min_state_entry: finite(min_state_entry),
        max_norm_law_deviation: fold_max(&|_, o| o.norm_law_deviation),
        max_ray_drift: fold_max(&|_, o| o.ray_drift),
        passed: checks.iter().all(|c| c.passed),
        checks,
    }
}

fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

/// Run every (instance, setting) pair of `config`, writing trajectory
/// CSVs, `report.json` and plots to `config.output_dir`.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentReport> {
    config.validate()?;
    let out_dir = &config.output_dir;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;

    // collect() keeps problem-id order whatever the scheduling
    let per_instance: Vec<InstanceRuns> =
        (0..config.n_problems).into_par_iter().map(|id| run_instance(config, id, out_dir)).collect();

    let mut notes = vec![
        "x* is the accelerated proximal-gradient solution; errors are Euclidean unless marked _inf".to_string(),
    ];
    if config.write_plots {
        let markers = || {
            let mut m: Vec<f64> = config.settings().iter().map(|s| s.0).collect();
            m.dedup();
            m
        };
        for (id, inst) in per_instance.iter().enumerate() {
            if inst.curves.is_empty() {
                continue;
            }
            let plot = Plot {
                title: format!("problem {id}: ‖x(t) − x*‖"),
                y_label: "error".into(),
                series: inst.curves.clone(),
                markers: markers(),
            };
            render_svg(&plot, out_dir.join(format!("p{id:03}.svg")))?;
        }
        let overlay = Plot {
            title: format!("all {} problems: ‖x(t) − x*‖", config.n_problems),
            y_label: "error".into(),
            series: per_instance.iter().flat_map(|i| i.curves.iter().cloned()).collect(),
            markers: markers(),
        };
        if !overlay.series.is_empty() {
            render_svg(&overlay, out_dir.join("overlay.svg"))?;
        }
        notes.push("plots: one SVG per problem (pNNN.svg) and an overlay of all problems (overlay.svg)".into());
    }

    let runs: Vec<RunRecord> = per_instance.into_iter().flat_map(|i| i.records).collect();
    let report = ExperimentReport {
        schema_version: REPORT_SCHEMA_VERSION,
        experiment: config.experiment,
        config: config.clone(),
        aggregate: aggregate(config, &runs),
        runs,
        notes,
    };
    report.save(out_dir.join("report.json"))?;
    Ok(report)
}

fn require_kind(config: &ExperimentConfig, kind: ExperimentKind) -> Result<()> {
    if config.experiment == kind {
        Ok(())
    } else {
        Err(Error::InvalidArgument {
            name: "experiment",
            reason: format!("expected {kind:?}, got {:?}", config.experiment),
        })
    }
}

/// Several prescribed settling times from a fixed start.
pub fn run_experiment_1(config: &ExperimentConfig) -> Result<ExperimentReport> {
    require_kind(config, ExperimentKind::PrescribedTimes)?;
    run_experiment(config)
}

/// Several scaled starts with one prescribed settling time.
pub fn run_experiment_2(config: &ExperimentConfig) -> Result<ExperimentReport> {
    require_kind(config, ExperimentKind::InitialConditions)?;
    run_experiment(config)
}

/// Files written by [`solve_problem`].
#[derive(Debug, Clone)]
pub struct SolveOutput {
    pub solution: Solution,
    pub outcome: RunOutcome,
    pub solution_path: PathBuf,
    pub csv_path: PathBuf,
    pub svg_path: PathBuf,
}

/// Solve one instance and write `solution.json`, `trajectory.csv` and
/// `trajectory.svg` to `out_dir`.
pub fn solve_problem(
    problem: &LassoProblem,
    t_p: f64,
    init_scale: f64,
    settings: &RunSettings,
    out_dir: impl AsRef<Path>,
) -> Result<SolveOutput> {
    let out_dir = out_dir.as_ref();
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let nnqp = build_nnqp(problem);
    let oracle = solve_prox(problem, 1e-10, 1_000_000)?;
    let (traj, outcome) = run_flow(&nnqp, &oracle.x, t_p, init_scale, settings)?;
    let last = traj.final_sample();
    let solution = Solution::new(problem, last.x.clone(), last.residual_norm)?;

    let solution_path = out_dir.join("solution.json");
    let csv_path = out_dir.join("trajectory.csv");
    let svg_path = out_dir.join("trajectory.svg");
    let text = serde_json::to_string_pretty(&solution).expect("solution serializes");
    std::fs::write(&solution_path, text + "\n").map_err(|e| Error::io(&solution_path, e))?;
    export_csv(&traj, &oracle.x, &csv_path)?;
    let errors = error_curve(&traj, &oracle.x);
    let plot = Plot {
        title: "‖x(t) − x*‖".into(),
        y_label: "error".into(),
        series: vec![Series {
            label: format!("T_p = {t_p}"),
            points: traj.samples.iter().zip(errors).map(|(s, e)| (s.t, e)).collect(),
        }],
        markers: vec![t_p],
    };
    render_svg(&plot, &svg_path)?;
    Ok(SolveOutput {
        solution,
        outcome,
        solution_path,
        csv_path,
        svg_path,
    })
}
