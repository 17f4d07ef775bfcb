//! Elastic-net instances and their smooth nonnegative QP form.
//!
//! Splitting `x = x₊ − x₋` with `x₊, x₋ ≥ 0` turns
//! `‖Ax − b‖² + τ‖x‖₁ + ρ‖x‖²` into the quadratic
//! `½ yᵀQy + qᵀy + bᵀb` over `y = (x₊; x₋) ≥ 0`, with
//!
//! ```text
//! Q = 2 [ AᵀA + ρI   −AᵀA    ]      q = [ −2Aᵀb + τ1 ]
//!       [ −AᵀA      AᵀA + ρI ]          [  2Aᵀb + τ1 ]
//! ```

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `min ‖Ax − b‖² + τ‖x‖₁ + ρ‖x‖²`.
#[derive(Debug, Clone, PartialEq)]
pub struct LassoProblem {
    a: DMatrix<f64>,
    b: DVector<f64>,
    tau: f64,
    rho: f64,
}

impl LassoProblem {
    pub fn new(a: DMatrix<f64>, b: DVector<f64>, tau: f64, rho: f64) -> Result<Self> {
        if a.nrows() == 0 || a.ncols() == 0 {
            return Err(Error::InvalidProblem {
                field: "A",
                reason: format!("matrix must be nonempty, got {}x{}", a.nrows(), a.ncols()),
            });
        }
        if let Some((idx, v)) = a.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            let (i, j) = (idx % a.nrows(), idx / a.nrows());
            return Err(Error::InvalidProblem {
                field: "A",
                reason: format!("entry ({i}, {j}) is not finite ({v})"),
            });
        }
        if b.len() != a.nrows() {
            return Err(Error::InvalidProblem {
                field: "b",
                reason: format!("length {} does not match the {} rows of A", b.len(), a.nrows()),
            });
        }
        if let Some((i, v)) = b.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(Error::InvalidProblem {
                field: "b",
                reason: format!("entry {i} is not finite ({v})"),
            });
        }
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(Error::InvalidProblem {
                field: "tau",
                reason: format!("must be positive and finite, got {tau}"),
            });
        }
        // ρ = 0 leaves (v; v) in the kernel of the split Hessian.
        if !(rho > 0.0 && rho.is_finite()) {
            return Err(Error::InvalidProblem {
                field: "rho",
                reason: format!("must be positive and finite, got {rho}"),
            });
        }
        Ok(LassoProblem { a, b, tau, rho })
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DVector<f64> {
        &self.b
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    /// Number of regression variables.
    pub fn n_x(&self) -> usize {
        self.a.ncols()
    }

    /// Number of observations.
    pub fn m(&self) -> usize {
        self.a.nrows()
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let file: ProblemFile = serde_json::from_str(s).map_err(|e| Error::InvalidProblem {
            field: json_field_hint(&e),
            reason: e.to_string(),
        })?;
        file.into_problem()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json_str(&text)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(&ProblemFile::from(self)).expect("problem serializes")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json_string()).map_err(|e| Error::io(path, e))
    }
}

/// On-disk layout: `{"A": [[...]], "b": [...], "tau": t, "rho": r}`.
#[derive(Debug, Serialize, Deserialize)]
struct ProblemFile {
    #[serde(rename = "A")]
    a: Vec<Vec<f64>>,
    b: Vec<f64>,
    tau: f64,
    rho: f64,
}

impl ProblemFile {
    fn into_problem(self) -> Result<LassoProblem> {
        let m = self.a.len();
        let n = self.a.first().map_or(0, Vec::len);
        if let Some(i) = self.a.iter().position(|row| row.len() != n) {
            return Err(Error::InvalidProblem {
                field: "A",
                reason: format!("row {i} has {} entries, expected {n}", self.a[i].len()),
            });
        }
        let a = DMatrix::from_fn(m, n, |i, j| self.a[i][j]);
        LassoProblem::new(a, DVector::from_vec(self.b), self.tau, self.rho)
    }
}

impl From<&LassoProblem> for ProblemFile {
    fn from(p: &LassoProblem) -> Self {
        ProblemFile {
            a: p.a.row_iter().map(|r| r.iter().copied().collect()).collect(),
            b: p.b.iter().copied().collect(),
            tau: p.tau,
            rho: p.rho,
        }
    }
}

fn json_field_hint(e: &serde_json::Error) -> &'static str {
    let msg = e.to_string();
    for field in ["tau", "rho"] {
        if msg.contains(&format!("`{field}`")) {
            return field;
        }
    }
    if msg.contains("`A`") {
        "A"
    } else if msg.contains("`b`") {
        "b"
    } else {
        "<document>"
    }
}

/// `min ½ yᵀQy + qᵀy` subject to `y ≥ 0`, where `y = (x₊; x₋)`.
#[derive(Debug, Clone, PartialEq)]
pub struct NnqpProblem {
    q_matrix: DMatrix<f64>,
    q_vector: DVector<f64>,
    n_x: usize,
}

impl NnqpProblem {
    /// Quadratic term `Q` (2n_x × 2n_x, symmetric positive definite).
    pub fn q_matrix(&self) -> &DMatrix<f64> {
        &self.q_matrix
    }

    /// Linear term `q`.
    pub fn q_vector(&self) -> &DVector<f64> {
        &self.q_vector
    }

    pub fn n_x(&self) -> usize {
        self.n_x
    }

    /// Length of the stacked variable, `2 n_x`.
    pub fn dim(&self) -> usize {
        2 * self.n_x
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Solution {
    pub x: Vec<f64>,
    pub objective: f64,
    pub kkt_residual_norm: f64,
}

impl Solution {
    pub fn new(problem: &LassoProblem, x: DVector<f64>, kkt_residual_norm: f64) -> Result<Self> {
        let objective = elastic_net_objective(problem, &x)?;
        Ok(Solution {
            x: x.iter().copied().collect(),
            objective,
            kkt_residual_norm,
        })
    }
}

pub fn build_nnqp(p: &LassoProblem) -> NnqpProblem {
    let n = p.n_x();
    let a = &p.a;
    // Gram matrix filled from the upper triangle so Q is exactly symmetric.
    let mut gram = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let v = a.column(i).dot(&a.column(j));
            gram[(i, j)] = v;
            gram[(j, i)] = v;
        }
    }
    let atb = a.tr_mul(&p.b);

    let mut q_matrix = DMatrix::zeros(2 * n, 2 * n);
    for i in 0..n {
        for j in 0..n {
            let g = 2.0 * gram[(i, j)];
            q_matrix[(i, j)] = g;
            q_matrix[(n + i, n + j)] = g;
            q_matrix[(i, n + j)] = -g;
            q_matrix[(n + i, j)] = -g;
        }
        q_matrix[(i, i)] += 2.0 * p.rho;
        q_matrix[(n + i, n + i)] += 2.0 * p.rho;
    }
    let mut q_vector = DVector::zeros(2 * n);
    for i in 0..n {
        q_vector[i] = -2.0 * atb[i] + p.tau;
        q_vector[n + i] = 2.0 * atb[i] + p.tau;
    }
    NnqpProblem {
        q_matrix,
        q_vector,
        n_x: n,
    }
}

/// `x = z₊ − z₋`.
pub fn recover_solution(nnqp: &NnqpProblem, z: &DVector<f64>) -> Result<DVector<f64>> {
    check_len("stacked primal z", nnqp.dim(), z.len())?;
    let n = nnqp.n_x;
    Ok(DVector::from_fn(n, |i, _| z[i] - z[n + i]))
}

/// `‖Ax − b‖² + τ‖x‖₁ + ρ‖x‖²`.
pub fn elastic_net_objective(p: &LassoProblem, x: &DVector<f64>) -> Result<f64> {
    check_len("x", p.n_x(), x.len())?;
    let r = &p.a * x - &p.b;
    Ok(r.norm_squared() + p.tau * x.lp_norm(1) + p.rho * x.norm_squared())
}

/// `½ yᵀQy + qᵀy`.
pub fn nnqp_objective(nnqp: &NnqpProblem, y: &DVector<f64>) -> Result<f64> {
    check_len("stacked y", nnqp.dim(), y.len())?;
    Ok(0.5 * y.dot(&(&nnqp.q_matrix * y)) + nnqp.q_vector.dot(y))
}

/// The split objective `g(x₊, x₋)` evaluated term by term, without going
/// through `Q` and `q`.
pub fn split_objective(p: &LassoProblem, y: &DVector<f64>) -> Result<f64> {
    let n = p.n_x();
    check_len("stacked y", 2 * n, y.len())?;
    let plus = y.rows(0, n);
    let minus = y.rows(n, n);
    let r = &p.a * (plus - minus) - &p.b;
    Ok(r.norm_squared() + p.tau * y.sum() + p.rho * plus.norm_squared() + p.rho * minus.norm_squared())
}

pub(crate) fn check_len(what: &'static str, expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            what,
            expected,
            actual,
        })
    }
}
