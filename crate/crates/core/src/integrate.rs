//! Adaptive implicit integration of fixed-time flows.
//!
//! The scheme is a five-stage, L-stable, stiffly accurate SDIRK of order 4
//! with an embedded order-3 solution for error control. Stage equations are
//! solved by Newton's method, first with the Jacobian frozen at the start of
//! the step and, if that stalls, with a Jacobian refreshed every iteration.
//!
//! Close to the equilibrium the direction field varies on the scale `r/k`,
//! so a step may shrink the residual norm `r` by at most a fixed factor (the
//! time to reach a given norm follows from `ṙ = −k(1 + r²)`). Once the norm
//! falls to `eps_stop` the state is frozen.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::flow::{FixedTimeSystem, FlowParams, FlowState, KktFlow};
use crate::linalg::Lu;
use crate::problem::{recover_solution, NnqpProblem};

/// Entries of z and w below `-NONNEGATIVITY_TOL` cause a step to be rejected.
pub const NONNEGATIVITY_TOL: f64 = 1e-9;

const GAMMA: f64 = 0.25;
const STAGES: usize = 5;
// nodes; only the order conditions need them since the flows are autonomous
#[cfg(test)]
const C: [f64; STAGES] = [0.25, 0.75, 11.0 / 20.0, 0.5, 1.0];
const A: [[f64; STAGES]; STAGES] = [
    [0.25, 0.0, 0.0, 0.0, 0.0],
    [0.5, 0.25, 0.0, 0.0, 0.0],
    [17.0 / 50.0, -1.0 / 25.0, 0.25, 0.0, 0.0],
    [371.0 / 1360.0, -137.0 / 2720.0, 15.0 / 544.0, 0.25, 0.0],
    [25.0 / 24.0, -49.0 / 48.0, 125.0 / 16.0, -85.0 / 12.0, 0.25],
];
const B_EMBEDDED: [f64; STAGES] = [59.0 / 48.0, -17.0 / 96.0, 225.0 / 32.0, -85.0 / 12.0, 0.0];

const NEWTON_TOL: f64 = 1e-3;
const NEWTON_MAX_ITER: usize = 10;
const SAFETY: f64 = 0.9;
const FAC_MIN: f64 = 0.2;
const FAC_MAX: f64 = 5.0;
/// A step is shortened so the residual norm stays above this fraction of
/// its value at the start of the step.
const MIN_NORM_RATIO: f64 = 0.8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegratorOptions {
    pub rtol: f64,
    pub atol: f64,
    pub eps_stop: f64,
    pub t_end: f64,
    pub max_step: f64,
    pub min_step: f64,
}

impl IntegratorOptions {
    /// Tolerances from `params`, horizon `T_p`, step cap `T_p / 50`.
    pub fn from_params(params: &FlowParams) -> Self {
        IntegratorOptions {
            rtol: params.rtol,
            atol: params.atol,
            eps_stop: params.eps_stop,
            t_end: params.t_p,
            max_step: params.t_p / 50.0,
            min_step: 1e-14 * params.t_p,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct IntegrationStats {
    pub steps: usize,
    pub rejected_steps: usize,
    pub linear_solves: usize,
    pub fallback_solves: usize,
    pub jacobian_refreshes: usize,
}

/// One accepted step attempt.
#[derive(Debug, Clone)]
pub struct StepResult {
    pub y: DVector<f64>,
    /// Scaled RMS norm of the embedded error estimate; `≤ 1` means accepted.
    pub error_estimate: f64,
}

/// Why a step attempt produced no candidate state.
#[derive(Debug)]
pub enum StepFailure {
    NewtonDiverged,
    Flow(Error),
}

/// SDIRK stepper over a [`FixedTimeSystem`].
pub struct ImplicitStepper {
    pub rtol: f64,
    pub atol: f64,
    newton_solves: usize,
    refreshes: usize,
}

#[derive(Clone, Copy, PartialEq)]
enum NewtonMode {
    Frozen,
    Refreshed,
}

impl ImplicitStepper {
    pub fn new(rtol: f64, atol: f64) -> Self {
        ImplicitStepper {
            rtol,
            atol,
            newton_solves: 0,
            refreshes: 0,
        }
    }

    /// Attempt one step of size `h` from `y`, given `f(y)` and `∂f/∂y(y)`.
    pub fn step<S: FixedTimeSystem>(
        &mut self,
        sys: &mut S,
        y: &DVector<f64>,
        f0: &DVector<f64>,
        jac0: &DMatrix<f64>,
        h: f64,
    ) -> std::result::Result<StepResult, StepFailure> {
        match self.try_step(sys, y, f0, jac0, h, NewtonMode::Frozen) {
            Err(StepFailure::NewtonDiverged) | Err(StepFailure::Flow(Error::AtEquilibrium)) => {
                self.refreshes += 1;
                self.try_step(sys, y, f0, jac0, h, NewtonMode::Refreshed)
            }
            other => other,
        }
    }

    fn try_step<S: FixedTimeSystem>(
        &mut self,
        sys: &mut S,
        y: &DVector<f64>,
        f0: &DVector<f64>,
        jac0: &DMatrix<f64>,
        h: f64,
        mode: NewtonMode,
    ) -> std::result::Result<StepResult, StepFailure> {
        let n = y.len();
        let hg = h * GAMMA;
        let scale = DVector::from_fn(n, |i, _| self.atol + self.rtol * y[i].abs());
        let frozen = newton_matrix(jac0, hg).ok_or(StepFailure::NewtonDiverged)?;
        let mut k: Vec<DVector<f64>> = Vec::with_capacity(STAGES);
        for i in 0..STAGES {
            let mut base = y.clone();
            for (j, kj) in k.iter().enumerate() {
                base.axpy(h * A[i][j], kj, 1.0);
            }
            let guess_slope = k.last().unwrap_or(f0);
            let mut stage = &base + hg * guess_slope;
            let mut prev_norm = f64::INFINITY;
            let mut converged = false;
            for iter in 0..NEWTON_MAX_ITER {
                let (f, refreshed) = match mode {
                    NewtonMode::Frozen => (sys.velocity(&stage).map_err(StepFailure::Flow)?, None),
                    NewtonMode::Refreshed => {
                        let (f, j) = sys.linearize(&stage).map_err(StepFailure::Flow)?;
                        (f, Some(newton_matrix(&j, hg).ok_or(StepFailure::NewtonDiverged)?))
                    }
                };
                let g = &stage - &base - hg * f;
                let lu = refreshed.as_ref().unwrap_or(&frozen);
                let delta = lu.solve(&g);
                self.newton_solves += 1;
                stage -= &delta;
                let dnorm = rms_scaled(&delta, &scale);
                if !dnorm.is_finite() {
                    return Err(StepFailure::NewtonDiverged);
                }
                if dnorm <= NEWTON_TOL {
                    converged = true;
                    break;
                }
                if iter > 0 && dnorm >= prev_norm {
                    return Err(StepFailure::NewtonDiverged);
                }
                prev_norm = dnorm;
            }
            if !converged {
                return Err(StepFailure::NewtonDiverged);
            }
            k.push((&stage - &base) / hg);
        }
        // stiffly accurate: the solution is the last stage
        let mut y_new = y.clone();
        let mut err = DVector::zeros(n);
        for (i, ki) in k.iter().enumerate() {
            y_new.axpy(h * A[STAGES - 1][i], ki, 1.0);
            err.axpy(h * (A[STAGES - 1][i] - B_EMBEDDED[i]), ki, 1.0);
        }
        let scale = DVector::from_fn(n, |i, _| self.atol + self.rtol * y[i].abs().max(y_new[i].abs()));
        Ok(StepResult {
            error_estimate: rms_scaled(&err, &scale),
            y: y_new,
        })
    }
}

fn newton_matrix(jac: &DMatrix<f64>, hg: f64) -> Option<Lu> {
    let n = jac.nrows();
    let mut m = jac * (-hg);
    for i in 0..n {
        m[(i, i)] += 1.0;
    }
    Lu::factor(m).ok()
}

fn rms_scaled(v: &DVector<f64>, scale: &DVector<f64>) -> f64 {
    let n = v.len().max(1) as f64;
    (v.iter().zip(scale.iter()).map(|(a, s)| (a / s).powi(2)).sum::<f64>() / n).sqrt()
}

/// `norm ≤ eps_stop`, inclusive.
pub fn detect_settle(norm: f64, eps_stop: f64) -> bool {
    norm <= eps_stop
}

/// Sampled solution of a generic fixed-time system.
#[derive(Debug, Clone)]
pub struct SystemTrajectory {
    pub times: Vec<f64>,
    pub states: Vec<DVector<f64>>,
    pub residual_norms: Vec<f64>,
    pub settle_time: Option<f64>,
    pub stats: IntegrationStats,
}

impl SystemTrajectory {
    pub fn last_state(&self) -> &DVector<f64> {
        self.states.last().expect("trajectory has samples")
    }
}

/// Sort, drop duplicates and make sure `0` and `t_end` are present.
fn normalize_samples(sample_times: &[f64], t_end: f64) -> Result<Vec<f64>> {
    if let Some(&bad) = sample_times.iter().find(|t| !(**t >= 0.0 && **t <= t_end)) {
        return Err(Error::InvalidArgument {
            name: "sample_times",
            reason: format!("{bad} lies outside [0, {t_end}]"),
        });
    }
    let mut times: Vec<f64> = sample_times.to_vec();
    times.push(0.0);
    times.push(t_end);
    times.sort_by(f64::total_cmp);
    times.dedup();
    Ok(times)
}

/// `n` uniformly spaced times on `[0, t_end]`, both ends included.
pub fn uniform_samples(t_end: f64, n: usize) -> Vec<f64> {
    let n = n.max(2);
    (0..n).map(|i| t_end * i as f64 / (n - 1) as f64).collect()
}

/// Integrate `sys` from `y0` over `[0, opts.t_end]`, stopping at settle.
pub fn integrate_system<S: FixedTimeSystem>(
    sys: &mut S,
    y0: DVector<f64>,
    opts: &IntegratorOptions,
    sample_times: &[f64],
) -> Result<SystemTrajectory> {
    let times = normalize_samples(sample_times, opts.t_end)?;
    let k = sys.gain();
    let eps = opts.eps_stop;
    let mut stepper = ImplicitStepper::new(opts.rtol, opts.atol);
    let mut stats = IntegrationStats::default();

    let mut out = SystemTrajectory {
        times: Vec::with_capacity(times.len() + 1),
        states: Vec::with_capacity(times.len() + 1),
        residual_norms: Vec::with_capacity(times.len() + 1),
        settle_time: None,
        stats,
    };

    let mut t = 0.0;
    let mut y = y0;
    let mut u = sys.residual(&y);
    let mut r = u.norm();
    let mut next = 0;
    // t = 0 is always the first sample
    out.push(t, &y, r);
    next += 1;

    if detect_settle(r, eps) {
        out.settle_time = Some(0.0);
    } else {
        let (mut f0, mut jac0) = sys.linearize(&y).map_err(|e| e.at_time(t))?;
        let mut h = initial_step(&y, &f0, opts);
        while next < times.len() {
            let target = times[next];
            let mut h_try = h.min(opts.max_step);
            let land_norm = if r * MIN_NORM_RATIO > eps { r * MIN_NORM_RATIO } else { 0.5 * eps };
            let tau = (r.atan() - land_norm.atan()) / k;
            if h_try >= tau {
                h_try = tau.max(opts.min_step);
            }
            let gap = target - t;
            let hits_sample = h_try >= gap || gap - h_try < opts.min_step;
            if hits_sample {
                h_try = gap;
            }
            if h_try < opts.min_step {
                return Err(Error::StepUnderflow {
                    time: t,
                    step: h_try,
                    last_state: y.iter().copied().collect(),
                });
            }

            let attempt = stepper.step(sys, &y, &f0, &jac0, h_try);
            let (y_new, err) = match attempt {
                Ok(res) => (res.y, res.error_estimate),
                Err(StepFailure::Flow(e @ Error::SingularSystem { .. })) if 0.5 * h_try < opts.min_step => {
                    return Err(e.at_time(t));
                }
                Err(_) => {
                    stats.rejected_steps += 1;
                    h = h_try * 0.5;
                    continue;
                }
            };
            if !(err <= 1.0) {
                stats.rejected_steps += 1;
                let fac = if err.is_finite() { (SAFETY * err.powf(-0.25)).max(FAC_MIN) } else { FAC_MIN };
                h = h_try * fac.min(0.5);
                continue;
            }
            if sys.nonnegative_state() && y_new.iter().any(|&v| v < -NONNEGATIVITY_TOL) {
                stats.rejected_steps += 1;
                h = h_try * 0.5;
                continue;
            }
            let u_new = sys.residual(&y_new);
            let r_new = u_new.norm();
            // passing through u = 0 reverses the residual direction
            let crossed = u_new.dot(&u) < 0.0;
            if !detect_settle(r_new, eps) && (crossed || r_new > r) {
                stats.rejected_steps += 1;
                h = h_try * 0.5;
                continue;
            }

            stats.steps += 1;
            t = if hits_sample { target } else { t + h_try };
            y = y_new;
            u = u_new;
            r = r_new;

            if detect_settle(r, eps) {
                out.settle_time = Some(t);
                break;
            }
            if hits_sample {
                out.push(target, &y, r);
                next += 1;
            }

            let fac = if err > 0.0 { SAFETY * err.powf(-0.25) } else { FAC_MAX };
            let proposal = h_try * fac.clamp(FAC_MIN, FAC_MAX);
            h = if hits_sample { proposal.max(h) } else { proposal };
            let lin = sys.linearize(&y).map_err(|e| e.at_time(t))?;
            f0 = lin.0;
            jac0 = lin.1;
        }
    }

    if let Some(ts) = out.settle_time {
        // the settled state is held to the end of the horizon
        if ts > *out.times.last().expect("first sample recorded") {
            out.push(ts, &y, r);
        }
        while next < times.len() {
            if times[next] > ts {
                out.push(times[next], &y, r);
            }
            next += 1;
        }
    }

    let sys_stats = sys.stats();
    stats.linear_solves = sys_stats.linear_solves + stepper.newton_solves;
    stats.fallback_solves = sys_stats.fallback_solves;
    stats.jacobian_refreshes = stepper.refreshes;
    out.stats = stats;
    Ok(out)
}

impl SystemTrajectory {
    fn push(&mut self, t: f64, y: &DVector<f64>, r: f64) {
        self.times.push(t);
        self.states.push(y.clone());
        self.residual_norms.push(r);
    }
}

fn initial_step(y: &DVector<f64>, f0: &DVector<f64>, opts: &IntegratorOptions) -> f64 {
    let scale = DVector::from_fn(y.len(), |i, _| opts.atol + opts.rtol * y[i].abs());
    let d0 = rms_scaled(y, &scale);
    let d1 = rms_scaled(f0, &scale);
    let h = if d0 < 1e-5 || !(d1 >= 1e-5) { 1e-6 } else { 0.01 * d0 / d1 };
    h.clamp(opts.min_step * 10.0, opts.max_step)
}

/// One sampled point of a KKT-flow trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub t: f64,
    pub z: DVector<f64>,
    pub w: DVector<f64>,
    pub residual_norm: f64,
    pub x: DVector<f64>,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub samples: Vec<Sample>,
    pub settle_time: Option<f64>,
    pub stats: IntegrationStats,
}

impl Trajectory {
    pub fn final_sample(&self) -> &Sample {
        self.samples.last().expect("trajectory has samples")
    }

    /// State at the end of the horizon.
    pub fn final_state(&self) -> FlowState {
        let s = self.final_sample();
        FlowState {
            z: s.z.clone(),
            w: s.w.clone(),
            t: s.t,
        }
    }

    pub fn min_z(&self) -> f64 {
        self.samples.iter().flat_map(|s| s.z.iter().copied()).fold(f64::INFINITY, f64::min)
    }

    pub fn min_w(&self) -> f64 {
        self.samples.iter().flat_map(|s| s.w.iter().copied()).fold(f64::INFINITY, f64::min)
    }
}

/// Integrate the KKT flow of `nnqp` from `init` to `params.t_p`.
pub fn integrate_flow(
    nnqp: &NnqpProblem,
    init: &FlowState,
    params: &FlowParams,
    sample_times: &[f64],
) -> Result<Trajectory> {
    params.validate()?;
    crate::problem::check_len("initial z", nnqp.dim(), init.z.len())?;
    crate::problem::check_len("initial w", nnqp.dim(), init.w.len())?;
    FlowState::new(init.z.clone(), init.w.clone())?;
    let mut sys = KktFlow::new(nnqp, params.k);
    let opts = IntegratorOptions::from_params(params);
    let traj = integrate_system(&mut sys, init.stacked(), &opts, sample_times)?;
    let samples = traj
        .times
        .iter()
        .zip(&traj.states)
        .zip(&traj.residual_norms)
        .map(|((&t, y), &r)| {
            let s = FlowState::from_stacked(y, t);
            let x = recover_solution(nnqp, &s.z).expect("state has the QP dimension");
            Sample {
                t,
                z: s.z,
                w: s.w,
                residual_norm: r,
                x,
            }
        })
        .collect();
    Ok(Trajectory {
        samples,
        settle_time: traj.settle_time,
        stats: traj.stats,
    })
}
