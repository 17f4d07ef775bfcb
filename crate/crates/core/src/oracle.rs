//! Reference solvers used as ground truth for the flow.
//!
//! Both work on the smooth-plus-ℓ1 form `½ xᵀHx − cᵀx + τ‖x‖₁` with
//! `H = 2AᵀA + 2ρI` and `c = 2Aᵀb`, which equals the elastic-net objective
//! up to the constant `‖b‖²`.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::problem::{elastic_net_objective, LassoProblem, NnqpProblem};

/// Largest problem accepted by [`solve_sign_enum`] (3⁸ = 6561 patterns).
pub const MAX_ENUM_VARS: usize = 8;

const POWER_ITERATIONS: usize = 30;
/// Power iteration underestimates the top eigenvalue; inflate it slightly.
const LIPSCHITZ_SAFETY: f64 = 1.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleMethod {
    ProxGradient,
    SignEnum,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult {
    pub x: DVector<f64>,
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
    pub method: OracleMethod,
}

/// `½ xᵀHx − cᵀx + τ‖x‖₁`.
struct Composite {
    h: DMatrix<f64>,
    c: DVector<f64>,
    tau: f64,
}

impl Composite {
    fn from_lasso(p: &LassoProblem) -> Self {
        let n = p.n_x();
        let mut h = p.a().tr_mul(p.a()) * 2.0;
        for i in 0..n {
            h[(i, i)] += 2.0 * p.rho();
        }
        Composite {
            h,
            c: p.a().tr_mul(p.b()) * 2.0,
            tau: p.tau(),
        }
    }

    /// Read `H`, `c` and `τ` back out of the split QP blocks.
    fn from_nnqp(nnqp: &NnqpProblem) -> Self {
        let n = nnqp.n_x();
        let qm = nnqp.q_matrix();
        let qv = nnqp.q_vector();
        let h = DMatrix::from_fn(n, n, |i, j| qm[(i, j)]);
        let tau = 0.5 * (qv[0] + qv[n]);
        let c = DVector::from_fn(n, |i, _| tau - qv[i]);
        Composite { h, c, tau }
    }

    fn value(&self, x: &DVector<f64>) -> f64 {
        0.5 * x.dot(&(&self.h * x)) - self.c.dot(x) + self.tau * x.lp_norm(1)
    }

    fn lipschitz(&self) -> f64 {
        let n = self.h.nrows();
        let mut v = DVector::from_element(n, 1.0 / (n as f64).sqrt());
        let mut lambda = 0.0;
        for _ in 0..POWER_ITERATIONS {
            let hv = &self.h * &v;
            let norm = hv.norm();
            if norm == 0.0 {
                break;
            }
            lambda = v.dot(&hv);
            v = hv / norm;
        }
        // fall back to a norm bound if power iteration stalled
        let bound = self.h.row_iter().map(|r| r.iter().map(|x| x.abs()).sum::<f64>()).fold(0.0, f64::max);
        (LIPSCHITZ_SAFETY * lambda).min(bound).max(f64::MIN_POSITIVE)
    }

    fn prox_step(&self, x: &DVector<f64>, step: f64) -> DVector<f64> {
        let grad = &self.h * x - &self.c;
        let thresh = self.tau * step;
        (x - grad * step).map(|v| soft_threshold(v, thresh))
    }
}

fn soft_threshold(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

struct ProxOutcome {
    x: DVector<f64>,
    iterations: usize,
    converged: bool,
}

fn accelerated_prox(f: &Composite, tol: f64, max_iter: usize) -> ProxOutcome {
    let n = f.h.nrows();
    let step = 1.0 / f.lipschitz();
    let mut x = DVector::zeros(n);
    let mut y = x.clone();
    let mut theta = 1.0_f64;
    let mut value = f.value(&x);
    for iter in 1..=max_iter {
        let x_next = f.prox_step(&y, step);
        let value_next = f.value(&x_next);
        if value_next > value {
            // restart from the last iterate with momentum cleared
            y = x.clone();
            theta = 1.0;
            let x_plain = f.prox_step(&x, step);
            value = f.value(&x_plain);
            x = x_plain;
        } else {
            let theta_next = 0.5 * (1.0 + (1.0 + 4.0 * theta * theta).sqrt());
            y = &x_next + (&x_next - &x) * ((theta - 1.0) / theta_next);
            theta = theta_next;
            x = x_next;
            value = value_next;
        }
        let residual = (&x - f.prox_step(&x, step)).amax();
        if residual <= tol {
            return ProxOutcome {
                x,
                iterations: iter,
                converged: true,
            };
        }
    }
    ProxOutcome {
        x,
        iterations: max_iter,
        converged: false,
    }
}

/// Accelerated proximal gradient with restart. `converged` means the
/// fixed-point residual `‖x − prox(x)‖∞` fell to `tol`.
pub fn solve_prox(p: &LassoProblem, tol: f64, max_iter: usize) -> Result<OracleResult> {
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument {
            name: "tol",
            reason: format!("must be positive, got {tol}"),
        });
    }
    let out = accelerated_prox(&Composite::from_lasso(p), tol, max_iter);
    Ok(OracleResult {
        objective: elastic_net_objective(p, &out.x)?,
        x: out.x,
        iterations: out.iterations,
        converged: out.converged,
        method: OracleMethod::ProxGradient,
    })
}

/// Exact minimizer by trying every sign pattern in `{−, 0, +}ⁿ`.
pub fn solve_sign_enum(p: &LassoProblem) -> Result<OracleResult> {
    let n = p.n_x();
    if n > MAX_ENUM_VARS {
        return Err(Error::EnumerationTooLarge { n, max: MAX_ENUM_VARS });
    }
    let f = Composite::from_lasso(p);
    let patterns = 3usize.pow(n as u32);
    let mut best: Option<(f64, DVector<f64>)> = None;
    let mut signs = vec![0.0; n];
    for code in 0..patterns {
        let mut c = code;
        for s in signs.iter_mut() {
            *s = [0.0, 1.0, -1.0][c % 3];
            c /= 3;
        }
        let Some(x) = solve_pattern(&f, &signs) else {
            continue;
        };
        let value = f.value(&x);
        if best.as_ref().is_none_or(|(v, _)| value < *v) {
            best = Some((value, x));
        }
    }
    let (_, x) = best.expect("the all-zero pattern is always feasible");
    Ok(OracleResult {
        objective: elastic_net_objective(p, &x)?,
        x,
        iterations: patterns,
        converged: true,
        method: OracleMethod::SignEnum,
    })
}

/// Stationary point of the smooth quadratic with fixed signs, if its signs
/// agree with the pattern.
fn solve_pattern(f: &Composite, signs: &[f64]) -> Option<DVector<f64>> {
    let n = signs.len();
    let support: Vec<usize> = (0..n).filter(|&i| signs[i] != 0.0).collect();
    let mut x = DVector::zeros(n);
    if support.is_empty() {
        return Some(x);
    }
    let k = support.len();
    let h = DMatrix::from_fn(k, k, |i, j| f.h[(support[i], support[j])]);
    let rhs = DVector::from_fn(k, |i, _| f.c[support[i]] - f.tau * signs[support[i]]);
    let xs = h.cholesky()?.solve(&rhs);
    for (i, &j) in support.iter().enumerate() {
        if xs[i] * signs[j] < 0.0 {
            return None;
        }
        x[j] = xs[i];
    }
    Some(x)
}

/// Minimizer of the split QP, `(max(x*, 0); max(−x*, 0))` from the
/// proximal oracle applied to the underlying regression problem.
pub fn solve_nnqp_oracle(nnqp: &NnqpProblem, tol: f64) -> Result<DVector<f64>> {
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument {
            name: "tol",
            reason: format!("must be positive, got {tol}"),
        });
    }
    const MAX_ITER: usize = 1_000_000;
    let out = accelerated_prox(&Composite::from_nnqp(nnqp), tol, MAX_ITER);
    if !out.converged {
        let f = Composite::from_nnqp(nnqp);
        let step = 1.0 / f.lipschitz();
        return Err(Error::OracleNotConverged {
            iterations: out.iterations,
            residual: (&out.x - f.prox_step(&out.x, step)).amax(),
        });
    }
    Ok(split_parts(&out.x))
}

/// `(max(x, 0); max(−x, 0))`.
pub fn split_parts(x: &DVector<f64>) -> DVector<f64> {
    let n = x.len();
    DVector::from_fn(2 * n, |i, _| if i < n { x[i].max(0.0) } else { (-x[i - n]).max(0.0) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::gen_instance;
    use crate::problem::build_nnqp;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn one_d() -> LassoProblem {
        LassoProblem::new(DMatrix::from_element(1, 1, 1.0), DVector::from_element(1, 2.0), 1.0, 0.1).unwrap()
    }

    #[test]
    fn one_dimensional_closed_form() {
        // soft threshold 2 at τ/2, then shrink by 1/(1 + ρ)
        let expected = (2.0 - 0.5) / 1.1;
        let prox = solve_prox(&one_d(), 1e-12, 10_000).unwrap();
        assert!(prox.converged);
        assert_relative_eq!(prox.x[0], expected, epsilon = 1e-10);
        assert_relative_eq!(prox.objective, 43.0 / 22.0, epsilon = 1e-10);
        let enumerated = solve_sign_enum(&one_d()).unwrap();
        assert_eq!(enumerated.iterations, 3);
        assert_relative_eq!(enumerated.x[0], expected, epsilon = 1e-12);
    }

    #[test]
    fn zero_data_gives_zero_solution() {
        let a = DMatrix::from_row_slice(3, 2, &[1.0, -2.0, 0.5, 3.0, -1.0, 1.0]);
        let p = LassoProblem::new(a, DVector::zeros(3), 0.7, 0.1).unwrap();
        let prox = solve_prox(&p, 1e-12, 1000).unwrap();
        assert!(prox.converged);
        assert_eq!(prox.x, DVector::zeros(2));
        let e = solve_sign_enum(&p).unwrap();
        assert_eq!(e.x, DVector::zeros(2));
        assert_eq!(e.objective, 0.0);
        assert_eq!(solve_nnqp_oracle(&build_nnqp(&p), 1e-12).unwrap(), DVector::zeros(4));
    }

    #[test]
    fn prox_beats_random_perturbations() {
        let p = gen_instance(10, 20, 1.0, 0.1, 7).unwrap();
        let sol = solve_prox(&p, 1e-10, 100_000).unwrap();
        assert!(sol.converged);
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..1000 {
            let scale = 10f64.powf(rng.random_range(-6.0..-1.0));
            let dx = DVector::from_fn(10, |_, _| rng.random_range(-1.0..1.0) * scale);
            let perturbed = elastic_net_objective(&p, &(&sol.x + dx)).unwrap();
            assert!(sol.objective <= perturbed + 1e-12, "{} > {}", sol.objective, perturbed);
        }
    }

    #[test]
    fn iteration_cap_reports_nonconvergence() {
        let p = gen_instance(6, 12, 1.0, 0.1, 3).unwrap();
        let sol = solve_prox(&p, 1e-14, 2).unwrap();
        assert!(!sol.converged);
        assert_eq!(sol.iterations, 2);
        assert!(solve_prox(&p, 0.0, 10).is_err());
    }

    #[test]
    fn enumeration_rejects_large_problems() {
        let p = gen_instance(9, 10, 1.0, 0.1, 0).unwrap();
        assert!(matches!(solve_sign_enum(&p), Err(Error::EnumerationTooLarge { n: 9, max: 8 })));
    }

    #[test]
    fn enumeration_agrees_with_prox_in_two_dimensions() {
        for seed in 0..10 {
            let p = gen_instance(2, 3, 1.0, 0.1, seed).unwrap();
            let a = solve_prox(&p, 1e-12, 100_000).unwrap();
            let b = solve_sign_enum(&p).unwrap();
            assert!((a.x - b.x).amax() <= 1e-8, "seed {seed}");
        }
    }

    #[test]
    fn nnqp_oracle_one_dimensional() {
        let y = solve_nnqp_oracle(&build_nnqp(&one_d()), 1e-12).unwrap();
        assert_relative_eq!(y[0], 15.0 / 11.0, epsilon = 1e-10);
        assert_eq!(y[1], 0.0);
    }

    #[test]
    fn nnqp_oracle_satisfies_kkt() {
        for seed in 0..5 {
            let nnqp = build_nnqp(&gen_instance(10, 20, 1.0, 0.1, seed).unwrap());
            let y = solve_nnqp_oracle(&nnqp, 1e-10).unwrap();
            let w = nnqp.q_matrix() * &y + nnqp.q_vector();
            assert!(y.min() >= 0.0);
            assert!(w.min() >= -1e-7, "seed {seed}: {}", w.min());
            assert!(y.component_mul(&w).amax() <= 1e-7);
            for i in 0..10 {
                assert_eq!(y[i] * y[10 + i], 0.0);
            }
        }
    }

    #[test]
    fn nnqp_data_round_trips_to_composite_form() {
        let p = gen_instance(4, 7, 0.8, 0.3, 11).unwrap();
        let from_lasso = Composite::from_lasso(&p);
        let from_qp = Composite::from_nnqp(&build_nnqp(&p));
        assert_relative_eq!(from_lasso.h, from_qp.h, epsilon = 1e-12);
        assert_relative_eq!(from_lasso.c, from_qp.c, epsilon = 1e-12);
        assert_relative_eq!(from_lasso.tau, from_qp.tau, epsilon = 1e-15);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn oracles_agree_on_small_instances(n in 1usize..=5, extra in 0usize..4, seed in any::<u64>(),
                                            tau in 0.05f64..3.0, rho in 0.01f64..1.0) {
            let p = gen_instance(n, n + extra, tau, rho, seed).unwrap();
            let a = solve_prox(&p, 1e-12, 200_000).unwrap();
            let b = solve_sign_enum(&p).unwrap();
            prop_assert!(a.converged);
            prop_assert!((&a.x - &b.x).amax() <= 1e-7);
            prop_assert!(b.objective <= a.objective + 1e-9);
        }
    }
}
