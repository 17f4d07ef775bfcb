//! Acceptance suite shared by the `check` subcommand and the `acceptance`
//! test target. Every threshold is a constant below.

use std::f64::consts::PI;
use std::fmt;
use std::path::PathBuf;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use super::config::ExperimentConfig;
use super::experiment::{run_experiment_1, run_experiment_2, run_flow, ExperimentReport, RunSettings};
use super::instance::{gen_instance, instance_seed};
use crate::error::Result;
use crate::flow::{generic_fixed_time_bound, lyapunov_coefficients, FlowParams, QuadraticNewtonFlow};
use crate::integrate::{integrate_system, uniform_samples, IntegratorOptions};
use crate::oracle::{solve_prox, solve_sign_enum};
use crate::problem::build_nnqp;

/// `‖x(T_p) − x*‖∞` at the end of every default-size run.
pub const SOLUTION_TOL: f64 = 1e-6;
/// `|measured − arctan(‖u(0)‖)/k|` for the scaled-start runs.
pub const SETTLE_PREDICTION_TOL: f64 = 1e-4;
pub const NORM_LAW_TOL: f64 = 1e-6;
/// Radians.
pub const RAY_DRIFT_TOL: f64 = 1e-6;
pub const NONNEGATIVITY_FLOOR: f64 = -1e-9;
/// Pairwise `∞`-norm agreement of flow and both oracles.
pub const ORACLE_AGREEMENT_TOL: f64 = 1e-6;
pub const COMPLEMENTARITY_TOL: f64 = 1e-8;
pub const GRADIENT_TOL: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct AcceptanceConfig {
    pub output_dir: PathBuf,
    pub seed: u64,
    /// Default-size instances per experiment.
    pub n_problems: usize,
    /// Instances for the norm-law and ray checks.
    pub n_property: usize,
    /// Small instances for oracle equivalence.
    pub n_small: usize,
    pub n_quadratic: usize,
}

impl AcceptanceConfig {
    pub fn new(output_dir: impl Into<PathBuf>) -> Self {
        AcceptanceConfig {
            output_dir: output_dir.into(),
            seed: 42,
            n_problems: 100,
            n_property: 20,
            n_small: 50,
            n_quadratic: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CriterionResult {
    pub id: usize,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl fmt::Display for CriterionResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let status = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "[{status}] {}. {}: {}", self.id, self.name, self.detail)
    }
}

fn result(id: usize, name: &'static str, passed: bool, detail: String) -> CriterionResult {
    CriterionResult { id, name, passed, detail }
}

fn failure(id: usize, name: &'static str, e: impl fmt::Display) -> CriterionResult {
    result(id, name, false, format!("error: {e}"))
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or("n/a".into(), |v| format!("{v:.3e}"))
}

fn experiment_config(cfg: &AcceptanceConfig, mut base: ExperimentConfig, sub: &str) -> ExperimentConfig {
    base.seed = cfg.seed;
    base.n_problems = cfg.n_problems;
    base.output_dir = cfg.output_dir.join(sub);
    base
}

/// Criterion 1: every prescribed settling time, every instance.
pub fn prescribed_times(report: &ExperimentReport) -> CriterionResult {
    const NAME: &str = "prescribed settling times";
    let a = &report.aggregate;
    let passed = a.failed_runs == 0
        && a.unsettled_runs == 0
        && a.max_final_error_inf <= SOLUTION_TOL
        && a.max_settle_over_t_p.is_some_and(|d| d <= 0.0);
    result(
        1,
        NAME,
        passed,
        format!(
            "{} runs, {} failed, {} unsettled; max ‖x(T_p) − x*‖∞ = {:.3e} (≤ {SOLUTION_TOL:e}); max settle − T_p = {}",
            a.runs,
            a.failed_runs,
            a.unsettled_runs,
            a.max_final_error_inf,
            fmt_opt(a.max_settle_over_t_p)
        ),
    )
}

/// Criterion 2: scaled starts settle by `T_p` at the predicted time.
pub fn initial_conditions(report: &ExperimentReport) -> CriterionResult {
    const NAME: &str = "independence of the initial condition";
    let a = &report.aggregate;
    let passed = a.failed_runs == 0
        && a.unsettled_runs == 0
        && a.max_settle_over_t_p.is_some_and(|d| d <= 0.0)
        && a.max_settle_prediction_error.is_some_and(|e| e <= SETTLE_PREDICTION_TOL);
    result(
        2,
        NAME,
        passed,
        format!(
            "{} runs, {} failed, {} unsettled; max settle = {}; max |settle − arctan(‖u(0)‖)/k| = {} (≤ {SETTLE_PREDICTION_TOL:e})",
            a.runs,
            a.failed_runs,
            a.unsettled_runs,
            fmt_opt(a.max_settle_time),
            fmt_opt(a.max_settle_prediction_error)
        ),
    )
}

/// Criteria 3 and 4 on `cfg.n_property` default-size instances.
pub fn norm_law_and_ray(cfg: &AcceptanceConfig) -> [CriterionResult; 2] {
    const NORM: &str = "residual norm law";
    const RAY: &str = "residual ray invariance";
    let base = ExperimentConfig::default();
    let runs: Result<Vec<(f64, f64)>> = (0..cfg.n_property)
        .into_par_iter()
        .map(|id| {
            let p = gen_instance(base.n_x, base.m, base.tau, base.rho, instance_seed(cfg.seed ^ 0x5eed_0003, id))?;
            let nnqp = build_nnqp(&p);
            let x_star = solve_prox(&p, base.oracle_tol, base.oracle_max_iter)?.x;
            let (_, o) = run_flow(&nnqp, &x_star, 1.0, 1.0, &RunSettings::default())?;
            Ok((o.norm_law_deviation, o.ray_drift))
        })
        .collect();
    match runs {
        Err(e) => [failure(3, NORM, &e), failure(4, RAY, &e)],
        Ok(runs) => {
            let norm = runs.iter().map(|r| r.0).fold(0.0, f64::max);
            let ray = runs.iter().map(|r| r.1).fold(0.0, f64::max);
            [
                result(
                    3,
                    NORM,
                    norm <= NORM_LAW_TOL,
                    format!("{} instances; max |arctan‖u(t)‖ − (arctan‖u(0)‖ − kt)| = {norm:.3e} (≤ {NORM_LAW_TOL:e})", runs.len()),
                ),
                result(
                    4,
                    RAY,
                    ray <= RAY_DRIFT_TOL,
                    format!("{} instances; max angular drift = {ray:.3e} rad (≤ {RAY_DRIFT_TOL:e})", runs.len()),
                ),
            ]
        }
    }
}

/// Criterion 5 over both experiment reports.
pub fn nonnegativity(reports: &[&ExperimentReport]) -> CriterionResult {
    const NAME: &str = "nonnegativity of z and w";
    let failed: usize = reports.iter().map(|r| r.aggregate.failed_runs).sum();
    let min = reports
        .iter()
        .flat_map(|r| r.outcomes())
        .map(|o| o.min_z.min(o.min_w))
        .fold(f64::INFINITY, f64::min);
    let runs: usize = reports.iter().map(|r| r.aggregate.runs).sum();
    result(
        5,
        NAME,
        failed == 0 && min >= NONNEGATIVITY_FLOOR,
        format!("{runs} trajectories; min entry = {min:.3e} (≥ {NONNEGATIVITY_FLOOR:e})"),
    )
}

/// Criterion 6: flow, proximal oracle and enumeration agree on small
/// instances (`n_x` cycling through 1..6, `m = 2 n_x`).
pub fn oracle_equivalence(cfg: &AcceptanceConfig) -> CriterionResult {
    const NAME: &str = "flow and oracle equivalence";
    let base = ExperimentConfig::default();
    let runs: Result<Vec<(f64, f64)>> = (0..cfg.n_small)
        .into_par_iter()
        .map(|id| {
            let n_x = 1 + id % 6;
            let p = gen_instance(n_x, 2 * n_x, base.tau, base.rho, instance_seed(cfg.seed ^ 0x5eed_0006, id))?;
            let nnqp = build_nnqp(&p);
            let prox = solve_prox(&p, base.oracle_tol, base.oracle_max_iter)?;
            let exact = solve_sign_enum(&p)?;
            let (traj, _) = run_flow(&nnqp, &prox.x, 1.0, 1.0, &RunSettings::default())?;
            let last = traj.final_sample();
            let gap = (&last.x - &prox.x).amax().max((&last.x - &exact.x).amax()).max((&prox.x - &exact.x).amax());
            let comp = (0..n_x).map(|i| last.z[i] * last.z[n_x + i]).fold(0.0, f64::max);
            Ok((gap, comp))
        })
        .collect();
    match runs {
        Err(e) => failure(6, NAME, e),
        Ok(runs) => {
            let gap = runs.iter().map(|r| r.0).fold(0.0, f64::max);
            let comp = runs.iter().map(|r| r.1).fold(0.0, f64::max);
            result(
                6,
                NAME,
                gap <= ORACLE_AGREEMENT_TOL && comp <= COMPLEMENTARITY_TOL,
                format!(
                    "{} instances; max pairwise ∞-gap = {gap:.3e} (≤ {ORACLE_AGREEMENT_TOL:e}); max x₊ᵢx₋ᵢ = {comp:.3e} (≤ {COMPLEMENTARITY_TOL:e})",
                    runs.len()
                ),
            )
        }
    }
}

/// Criterion 7: the arctan settling bound is below the generic bound.
pub fn bound_tightness() -> CriterionResult {
    let mut passed = true;
    let parts: Vec<String> = [PI / 2.0, 5.0 * PI / 4.0, 5.0 * PI]
        .iter()
        .map(|&k| {
            let (k1, k2) = lyapunov_coefficients(k);
            let tight = PI / (2.0 * k);
            let generic = generic_fixed_time_bound(k1, k2, 0.5, 1.5);
            passed &= tight < generic;
            format!("k = {k:.4}: π/(2k) = {tight:.4} vs {generic:.4}")
        })
        .collect();
    result(7, "settling bound tightness", passed, parts.join("; "))
}

/// Criterion 8: the Newton flow on random strongly convex quadratics.
pub fn unconstrained_newton(cfg: &AcceptanceConfig) -> CriterionResult {
    const NAME: &str = "unconstrained Newton flow";
    let runs: Result<Vec<f64>> = (0..cfg.n_quadratic)
        .into_par_iter()
        .map(|id| {
            let mut rng = ChaCha8Rng::seed_from_u64(instance_seed(cfg.seed ^ 0x5eed_0008, id));
            let n = rng.random_range(1..=50);
            let b = DMatrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
            let mut p = b.tr_mul(&b) / n as f64;
            for i in 0..n {
                p[(i, i)] += 0.1;
            }
            let c = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
            let x0 = DVector::from_fn(n, |_, _| 5.0 * rng.sample::<f64, _>(StandardNormal));
            let params = FlowParams::from_settling_time(1.0)?;
            let mut flow = QuadraticNewtonFlow::new(p, c, params.k)?;
            let traj = integrate_system(&mut flow, x0, &IntegratorOptions::from_params(&params), &uniform_samples(1.0, 200))?;
            Ok(flow.gradient(traj.last_state()).norm())
        })
        .collect();
    match runs {
        Err(e) => failure(8, NAME, e),
        Ok(g) => {
            let worst = g.iter().copied().fold(0.0, f64::max);
            result(
                8,
                NAME,
                worst <= GRADIENT_TOL,
                format!("{} quadratics; max ‖∇f(x(T_p))‖ = {worst:.3e} (≤ {GRADIENT_TOL:e})", g.len()),
            )
        }
    }
}

/// Run all criteria in order. Experiment artifacts go below
/// `cfg.output_dir`.
pub fn run_acceptance(cfg: &AcceptanceConfig) -> Vec<CriterionResult> {
    let exp1 = run_experiment_1(&experiment_config(cfg, ExperimentConfig::prescribed_times(), "exp1"));
    let exp2 = run_experiment_2(&experiment_config(cfg, ExperimentConfig::initial_conditions(), "exp2"));
    let mut out = Vec::with_capacity(8);
    out.push(match &exp1 {
        Ok(r) => prescribed_times(r),
        Err(e) => failure(1, "prescribed settling times", e),
    });
    out.push(match &exp2 {
        Ok(r) => initial_conditions(r),
        Err(e) => failure(2, "independence of the initial condition", e),
    });
    out.extend(norm_law_and_ray(cfg));
    out.push(match (&exp1, &exp2) {
        (Ok(a), Ok(b)) => nonnegativity(&[a, b]),
        (Err(e), _) | (_, Err(e)) => failure(5, "nonnegativity of z and w", e),
    });
    out.push(oracle_equivalence(cfg));
    out.push(bound_tightness());
    out.push(unconstrained_newton(cfg));
    out
}
