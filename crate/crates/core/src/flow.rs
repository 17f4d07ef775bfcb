//! The fixed-time KKT flow.
//!
//! For the nonnegative QP `min ½zᵀQz + qᵀz, z ≥ 0` the residual
//! `u = (Qz − w + q; z ⊙ w)` is driven by
//!
//! ```text
//! [ Q  −I ] [ż]       k (1/‖u‖ + ‖u‖) u
//! [ W   Z ] [ẇ]  = −
//! ```
//!
//! so that `u̇ = −k(1/‖u‖ + ‖u‖) u`. The norm then obeys `ṙ = −k(1 + r²)`,
//! which reaches zero at `arctan(r₀)/k ≤ π/(2k)`.

use std::f64::consts::FRAC_PI_2;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::Lu;
use crate::problem::{check_len, NnqpProblem};

/// Reduced-system condition estimate above which the full block system is
/// factored instead.
pub const REDUCED_CONDITION_LIMIT: f64 = 1e12;

/// Condition estimate above which the full block system is treated as
/// numerically singular.
pub const SINGULAR_CONDITION_LIMIT: f64 = 1e15;

/// Primal–dual pair `(z, w)` at flow time `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowState {
    pub z: DVector<f64>,
    pub w: DVector<f64>,
    pub t: f64,
}

impl FlowState {
    /// Starting point; every entry of `z` and `w` must be strictly positive.
    pub fn new(z: DVector<f64>, w: DVector<f64>) -> Result<Self> {
        check_len("dual w", z.len(), w.len())?;
        for (name, v) in [("z", &z), ("w", &w)] {
            if let Some((i, x)) = v.iter().enumerate().find(|(_, x)| !(**x > 0.0 && x.is_finite())) {
                return Err(Error::InvalidArgument {
                    name,
                    reason: format!("entry {i} must be strictly positive, got {x}"),
                });
            }
        }
        Ok(FlowState { z, w, t: 0.0 })
    }

    /// `(z, w) = scale · 1`.
    pub fn uniform(dim: usize, scale: f64) -> Result<Self> {
        Self::new(DVector::from_element(dim, scale), DVector::from_element(dim, scale))
    }

    pub(crate) fn from_stacked(y: &DVector<f64>, t: f64) -> Self {
        let d = y.len() / 2;
        FlowState {
            z: y.rows(0, d).into_owned(),
            w: y.rows(d, d).into_owned(),
            t,
        }
    }

    pub(crate) fn stacked(&self) -> DVector<f64> {
        let d = self.z.len();
        DVector::from_fn(2 * d, |i, _| if i < d { self.z[i] } else { self.w[i - d] })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowParams {
    pub k: f64,
    pub t_p: f64,
    pub eps_stop: f64,
    pub rtol: f64,
    pub atol: f64,
}

impl FlowParams {
    pub const DEFAULT_EPS_STOP: f64 = 1e-10;
    pub const DEFAULT_TOL: f64 = 1e-8;

    /// Gain `k = π / (2 T_p)` with default tolerances.
    pub fn from_settling_time(t_p: f64) -> Result<Self> {
        if !(t_p > 0.0 && t_p.is_finite()) {
            return Err(Error::InvalidArgument {
                name: "t_p",
                reason: format!("prescribed settling time must be positive, got {t_p}"),
            });
        }
        Ok(FlowParams {
            k: FRAC_PI_2 / t_p,
            t_p,
            eps_stop: Self::DEFAULT_EPS_STOP,
            rtol: Self::DEFAULT_TOL,
            atol: Self::DEFAULT_TOL,
        })
    }

    pub fn with_tolerances(mut self, rtol: f64, atol: f64) -> Self {
        self.rtol = rtol;
        self.atol = atol;
        self
    }

    pub fn with_eps_stop(mut self, eps_stop: f64) -> Self {
        self.eps_stop = eps_stop;
        self
    }

    pub(crate) fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("k", self.k),
            ("t_p", self.t_p),
            ("eps_stop", self.eps_stop),
            ("rtol", self.rtol),
            ("atol", self.atol),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidArgument {
                    name,
                    reason: format!("must be positive and finite, got {v}"),
                });
            }
        }
        Ok(())
    }
}

/// Stationarity residual `u1`, complementarity residual `u2` and `‖(u1; u2)‖`.
#[derive(Debug, Clone, PartialEq)]
pub struct Residual {
    pub u1: DVector<f64>,
    pub u2: DVector<f64>,
    pub norm: f64,
}

impl Residual {
    pub fn stacked(&self) -> DVector<f64> {
        let d = self.u1.len();
        DVector::from_fn(2 * d, |i, _| if i < d { self.u1[i] } else { self.u2[i - d] })
    }
}

pub fn kkt_residual(nnqp: &NnqpProblem, s: &FlowState) -> Result<Residual> {
    check_len("primal z", nnqp.dim(), s.z.len())?;
    check_len("dual w", nnqp.dim(), s.w.len())?;
    Ok(residual_parts(nnqp, &s.z, &s.w))
}

fn residual_parts(nnqp: &NnqpProblem, z: &DVector<f64>, w: &DVector<f64>) -> Residual {
    let u1 = nnqp.q_matrix() * z - w + nnqp.q_vector();
    let u2 = z.component_mul(w);
    let norm = (u1.norm_squared() + u2.norm_squared()).sqrt();
    Residual { u1, u2, norm }
}

/// Shared scalar `k (1/r + r)` of both block equations.
pub fn gain_scale(norm: f64, k: f64) -> Result<f64> {
    if norm == 0.0 {
        return Err(Error::AtEquilibrium);
    }
    if !(norm > 0.0 && norm.is_finite()) {
        return Err(Error::InvalidArgument {
            name: "norm",
            reason: format!("residual norm must be positive, got {norm}"),
        });
    }
    Ok(k * (1.0 / norm + norm))
}

/// Factorization of the KKT Jacobian `[Q, −I; W, Z]` at one state.
///
/// Eliminating the dual block leaves `(W + ZQ) a = bottom + Z top`; when that
/// reduced matrix is ill-conditioned the full block matrix is factored.
pub struct KktSystem<'a> {
    q: &'a DMatrix<f64>,
    z: DVector<f64>,
    route: KktRoute,
}

enum KktRoute {
    Reduced(Lu),
    Full(Lu),
}

impl<'a> KktSystem<'a> {
    pub fn factor(nnqp: &'a NnqpProblem, z: &DVector<f64>, w: &DVector<f64>) -> Result<Self> {
        let q = nnqp.q_matrix();
        let d = nnqp.dim();
        let mut reduced = DMatrix::zeros(d, d);
        for j in 0..d {
            for i in 0..d {
                reduced[(i, j)] = z[i] * q[(i, j)];
            }
            reduced[(j, j)] += w[j];
        }
        if let Ok(lu) = Lu::factor(reduced) {
            if lu.condition_estimate() <= REDUCED_CONDITION_LIMIT {
                return Ok(KktSystem {
                    q,
                    z: z.clone(),
                    route: KktRoute::Reduced(lu),
                });
            }
        }
        let mut full = DMatrix::zeros(2 * d, 2 * d);
        full.view_mut((0, 0), (d, d)).copy_from(q);
        for i in 0..d {
            full[(i, d + i)] = -1.0;
            full[(d + i, i)] = w[i];
            full[(d + i, d + i)] = z[i];
        }
        let lu = Lu::factor(full).map_err(|_| Error::SingularSystem {
            time: 0.0,
            condition: f64::INFINITY,
        })?;
        let condition = lu.condition_estimate();
        if condition > SINGULAR_CONDITION_LIMIT {
            return Err(Error::SingularSystem { time: 0.0, condition });
        }
        Ok(KktSystem {
            q,
            z: z.clone(),
            route: KktRoute::Full(lu),
        })
    }

    pub fn used_fallback(&self) -> bool {
        matches!(self.route, KktRoute::Full(_))
    }

    /// Solve `[Q, −I; W, Z] (a; b) = (top; bottom)`.
    pub fn solve(&self, top: &DVector<f64>, bottom: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        match &self.route {
            KktRoute::Reduced(lu) => {
                let rhs = bottom + self.z.component_mul(top);
                let a = lu.solve(&rhs);
                let b = self.q * &a - top;
                (a, b)
            }
            KktRoute::Full(lu) => {
                let d = top.len();
                let rhs = DVector::from_fn(2 * d, |i, _| if i < d { top[i] } else { bottom[i - d] });
                let x = lu.solve(&rhs);
                (x.rows(0, d).into_owned(), x.rows(d, d).into_owned())
            }
        }
    }
}

/// Flow velocity `(ż, ẇ)` at one state.
#[derive(Debug, Clone, PartialEq)]
pub struct NewtonDirection {
    pub dz: DVector<f64>,
    pub dw: DVector<f64>,
    pub used_fallback: bool,
}

pub fn newton_direction(nnqp: &NnqpProblem, s: &FlowState, k: f64) -> Result<NewtonDirection> {
    let res = kkt_residual(nnqp, s)?;
    let gain = gain_scale(res.norm, k)?;
    let sys = KktSystem::factor(nnqp, &s.z, &s.w).map_err(|e| e.at_time(s.t))?;
    let (dz, dw) = sys.solve(&(-gain * &res.u1), &(-gain * &res.u2));
    Ok(NewtonDirection {
        dz,
        dw,
        used_fallback: sys.used_fallback(),
    })
}

/// `r(t) = tan(max(0, arctan(r₀) − k t))`.
pub fn analytic_residual_norm(norm0: f64, k: f64, t: f64) -> f64 {
    let angle = norm0.atan() - k * t;
    if angle <= 0.0 {
        0.0
    } else {
        angle.tan()
    }
}

/// `arctan(r₀)/k`, the time the residual norm reaches zero.
pub fn analytic_settling_time(norm0: f64, k: f64) -> f64 {
    norm0.atan() / k
}

/// Generic fixed-time bound `1/(k₁(1−α₁)) + 1/(k₂(α₂−1))` for
/// `V̇ ≤ −k₁V^α₁ − k₂V^α₂`.
pub fn generic_fixed_time_bound(k1: f64, k2: f64, alpha1: f64, alpha2: f64) -> f64 {
    1.0 / (k1 * (1.0 - alpha1)) + 1.0 / (k2 * (alpha2 - 1.0))
}

/// Bound `μπ / (2√(k₁k₂))` for exponents `1 ∓ 1/μ`.
pub fn symmetric_fixed_time_bound(mu: f64, k1: f64, k2: f64) -> f64 {
    mu * std::f64::consts::PI / (2.0 * (k1 * k2).sqrt())
}

/// Lyapunov coefficients `(k₁, k₂)` of `V = ½‖u‖²` under the flow with gain `k`.
pub fn lyapunov_coefficients(k: f64) -> (f64, f64) {
    let s = std::f64::consts::SQRT_2;
    (s * k, 2.0 * s * k)
}

/// Velocity of the Newton fixed-time flow for smooth unconstrained problems:
/// solves `H ẋ = −k (1/‖∇f‖ + ‖∇f‖) ∇f`.
pub fn unconstrained_newton_rhs(hessian: &DMatrix<f64>, grad: &DVector<f64>, k: f64) -> Result<DVector<f64>> {
    check_len("gradient", hessian.nrows(), grad.len())?;
    let lu = Lu::factor(hessian.clone()).map_err(|_| Error::SingularSystem {
        time: 0.0,
        condition: f64::INFINITY,
    })?;
    let gain = gain_scale(grad.norm(), k)?;
    Ok(lu.solve(&(-gain * grad)))
}

/// Counters for linear algebra performed while evaluating a flow.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SolveStats {
    pub linear_solves: usize,
    pub fallback_solves: usize,
}

/// An autonomous flow `ẏ = f(y)` whose residual `u(y)` obeys
/// `u̇ = −k(1/‖u‖ + ‖u‖) u`.
pub trait FixedTimeSystem {
    fn dim(&self) -> usize;

    fn gain(&self) -> f64;

    fn residual(&self, y: &DVector<f64>) -> DVector<f64>;

    fn velocity(&mut self, y: &DVector<f64>) -> Result<DVector<f64>>;

    /// Velocity and its Jacobian `∂f/∂y` at `y`.
    fn linearize(&mut self, y: &DVector<f64>) -> Result<(DVector<f64>, DMatrix<f64>)>;

    /// Whether every component of the state must stay nonnegative.
    fn nonnegative_state(&self) -> bool;

    fn stats(&self) -> SolveStats;
}

/// The KKT flow on the stacked state `y = (z; w)`.
pub struct KktFlow<'a> {
    nnqp: &'a NnqpProblem,
    k: f64,
    stats: SolveStats,
}

impl<'a> KktFlow<'a> {
    pub fn new(nnqp: &'a NnqpProblem, k: f64) -> Self {
        KktFlow {
            nnqp,
            k,
            stats: SolveStats::default(),
        }
    }

    fn split(&self, y: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        let d = self.nnqp.dim();
        (y.rows(0, d).into_owned(), y.rows(d, d).into_owned())
    }

    fn direction(&mut self, y: &DVector<f64>) -> Result<(KktSystem<'a>, Residual, f64, DVector<f64>)> {
        let (z, w) = self.split(y);
        let res = residual_parts(self.nnqp, &z, &w);
        let gain = gain_scale(res.norm, self.k)?;
        let sys = KktSystem::factor(self.nnqp, &z, &w)?;
        self.stats.linear_solves += 1;
        if sys.used_fallback() {
            self.stats.fallback_solves += 1;
        }
        let (dz, dw) = sys.solve(&(-gain * &res.u1), &(-gain * &res.u2));
        let v = stack(&dz, &dw);
        Ok((sys, res, gain, v))
    }
}

impl FixedTimeSystem for KktFlow<'_> {
    fn dim(&self) -> usize {
        2 * self.nnqp.dim()
    }

    fn gain(&self) -> f64 {
        self.k
    }

    fn residual(&self, y: &DVector<f64>) -> DVector<f64> {
        let (z, w) = self.split(y);
        residual_parts(self.nnqp, &z, &w).stacked()
    }

    fn velocity(&mut self, y: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(self.direction(y)?.3)
    }

    fn linearize(&mut self, y: &DVector<f64>) -> Result<(DVector<f64>, DMatrix<f64>)> {
        // Differentiating J(y) v(y) = −g(r) u(y) gives
        //   ∂v = −J⁻¹ M_v − g I + (g'/g) v (Jᵀû)ᵀ,  M_v = [0, 0; diag(v_w), diag(v_z)].
        let (sys, res, gain, v) = self.direction(y)?;
        let d = self.nnqp.dim();
        let n = 2 * d;
        let (vz, vw) = (v.rows(0, d), v.rows(d, d));
        let r = res.norm;
        let mut jac = DMatrix::zeros(n, n);
        let zero = DVector::zeros(d);
        let mut e = DVector::zeros(d);
        for j in 0..d {
            e[j] = 1.0;
            let (a, b) = sys.solve(&zero, &e);
            e[j] = 0.0;
            for i in 0..d {
                jac[(i, j)] = -a[i] * vw[j];
                jac[(d + i, j)] = -b[i] * vw[j];
                jac[(i, d + j)] = -a[i] * vz[j];
                jac[(d + i, d + j)] = -b[i] * vz[j];
            }
        }
        self.stats.linear_solves += d;
        for i in 0..n {
            jac[(i, i)] -= gain;
        }
        let u_hat1 = &res.u1 / r;
        let u_hat2 = &res.u2 / r;
        let (z, w) = self.split(y);
        // Jᵀû = (Qû₁ + W û₂; −û₁ + Z û₂)
        let top = self.nnqp.q_matrix() * &u_hat1 + w.component_mul(&u_hat2);
        let bottom = z.component_mul(&u_hat2) - &u_hat1;
        let jt_u = stack(&top, &bottom);
        let ratio = (r * r - 1.0) / (r * (1.0 + r * r));
        jac.ger(ratio, &v, &jt_u, 1.0);
        Ok((v, jac))
    }

    fn nonnegative_state(&self) -> bool {
        true
    }

    fn stats(&self) -> SolveStats {
        self.stats
    }
}

/// Newton fixed-time flow for `f(x) = ½xᵀPx + cᵀx` with `P` positive definite.
pub struct QuadraticNewtonFlow {
    p: DMatrix<f64>,
    c: DVector<f64>,
    lu: Lu,
    k: f64,
    stats: SolveStats,
}

impl QuadraticNewtonFlow {
    pub fn new(p: DMatrix<f64>, c: DVector<f64>, k: f64) -> Result<Self> {
        check_len("linear term c", p.nrows(), c.len())?;
        let lu = Lu::factor(p.clone()).map_err(|_| Error::SingularSystem {
            time: 0.0,
            condition: f64::INFINITY,
        })?;
        Ok(QuadraticNewtonFlow {
            p,
            c,
            lu,
            k,
            stats: SolveStats::default(),
        })
    }

    pub fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.p * x + &self.c
    }
}

impl FixedTimeSystem for QuadraticNewtonFlow {
    fn dim(&self) -> usize {
        self.c.len()
    }

    fn gain(&self) -> f64 {
        self.k
    }

    fn residual(&self, y: &DVector<f64>) -> DVector<f64> {
        self.gradient(y)
    }

    fn velocity(&mut self, y: &DVector<f64>) -> Result<DVector<f64>> {
        let g = self.gradient(y);
        let gain = gain_scale(g.norm(), self.k)?;
        self.stats.linear_solves += 1;
        Ok(self.lu.solve(&(-gain * g)))
    }

    fn linearize(&mut self, y: &DVector<f64>) -> Result<(DVector<f64>, DMatrix<f64>)> {
        // ∂v = −g I + (g'/g) v (P ĝ)ᵀ
        let g = self.gradient(y);
        let r = g.norm();
        let gain = gain_scale(r, self.k)?;
        self.stats.linear_solves += 1;
        let v = self.lu.solve(&(-gain * &g));
        let n = g.len();
        let mut jac = DMatrix::from_diagonal_element(n, n, -gain);
        let pg = &self.p * (&g / r);
        jac.ger((r * r - 1.0) / (r * (1.0 + r * r)), &v, &pg, 1.0);
        Ok((v, jac))
    }

    fn nonnegative_state(&self) -> bool {
        false
    }

    fn stats(&self) -> SolveStats {
        self.stats
    }
}

fn stack(a: &DVector<f64>, b: &DVector<f64>) -> DVector<f64> {
    let d = a.len();
    DVector::from_fn(d + b.len(), |i, _| if i < d { a[i] } else { b[i - d] })
}
