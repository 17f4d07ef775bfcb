//! Small dense kernels: LU with partial pivoting and a 1-norm condition
//! estimate. Sizes here are a few hundred at most.

use nalgebra::{DMatrix, DVector};

/// LU factorization `P A = L U` with partial pivoting, stored in place.
#[derive(Debug, Clone)]
pub struct Lu {
    factors: DMatrix<f64>,
    perm: Vec<usize>,
    norm1: f64,
}

/// Returned when a pivot is exactly zero or non-finite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SingularPivot {
    pub column: usize,
}

impl Lu {
    pub fn factor(a: DMatrix<f64>) -> Result<Self, SingularPivot> {
        assert!(a.is_square(), "LU requires a square matrix");
        let n = a.nrows();
        let norm1 = norm1(&a);
        let mut f = a;
        let mut perm: Vec<usize> = (0..n).collect();
        for k in 0..n {
            let mut p = k;
            let mut best = f[(k, k)].abs();
            for i in k + 1..n {
                let v = f[(i, k)].abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if best == 0.0 || !best.is_finite() {
                return Err(SingularPivot { column: k });
            }
            if p != k {
                f.swap_rows(p, k);
                perm.swap(p, k);
            }
            let pivot = f[(k, k)];
            for i in k + 1..n {
                f[(i, k)] /= pivot;
            }
            for j in k + 1..n {
                let ukj = f[(k, j)];
                if ukj == 0.0 {
                    continue;
                }
                for i in k + 1..n {
                    let lik = f[(i, k)];
                    f[(i, j)] -= lik * ukj;
                }
            }
        }
        Ok(Lu {
            factors: f,
            perm,
            norm1,
        })
    }

    pub fn dim(&self) -> usize {
        self.perm.len()
    }

    /// Solve `A x = b`.
    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        let n = self.dim();
        debug_assert_eq!(b.len(), n);
        let f = &self.factors;
        let mut x = DVector::from_iterator(n, self.perm.iter().map(|&p| b[p]));
        for j in 0..n {
            let xj = x[j];
            if xj != 0.0 {
                for i in j + 1..n {
                    x[i] -= f[(i, j)] * xj;
                }
            }
        }
        for j in (0..n).rev() {
            x[j] /= f[(j, j)];
            let xj = x[j];
            if xj != 0.0 {
                for i in 0..j {
                    x[i] -= f[(i, j)] * xj;
                }
            }
        }
        x
    }

    /// Solve `Aᵀ x = b`.
    pub fn solve_transpose(&self, b: &DVector<f64>) -> DVector<f64> {
        let n = self.dim();
        let f = &self.factors;
        // Uᵀ y = b
        let mut y = b.clone();
        for i in 0..n {
            let mut s = y[i];
            for k in 0..i {
                s -= f[(k, i)] * y[k];
            }
            y[i] = s / f[(i, i)];
        }
        // Lᵀ z = y
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in i + 1..n {
                s -= f[(k, i)] * y[k];
            }
            y[i] = s;
        }
        let mut x = DVector::zeros(n);
        for (i, &p) in self.perm.iter().enumerate() {
            x[p] = y[i];
        }
        x
    }

    /// Solve for every column of `b`.
    pub fn solve_matrix(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(b.nrows(), b.ncols());
        for j in 0..b.ncols() {
            let col = self.solve(&b.column(j).into_owned());
            out.set_column(j, &col);
        }
        out
    }

    /// Hager–Higham estimate of `‖A‖₁ ‖A⁻¹‖₁`.
    pub fn condition_estimate(&self) -> f64 {
        let n = self.dim();
        if n == 0 {
            return 1.0;
        }
        let mut x = DVector::from_element(n, 1.0 / n as f64);
        let mut est = 0.0;
        for iter in 0..5 {
            let y = self.solve(&x);
            let y_norm = y.iter().map(|v| v.abs()).sum::<f64>();
            if !y_norm.is_finite() {
                return f64::INFINITY;
            }
            if iter > 0 && y_norm <= est {
                break;
            }
            est = y_norm;
            let sign = y.map(|v| if v >= 0.0 { 1.0 } else { -1.0 });
            let z = self.solve_transpose(&sign);
            let (j, zmax) = z
                .iter()
                .enumerate()
                .fold((0, 0.0_f64), |acc, (i, v)| if v.abs() > acc.1 { (i, v.abs()) } else { acc });
            if zmax <= z.dot(&x) {
                break;
            }
            x.fill(0.0);
            x[j] = 1.0;
        }
        // Higham's alternating-sign vector guards against the classic
        // counterexamples of the plain Hager iteration.
        let alt = DVector::from_iterator(
            n,
            (0..n).map(|i| {
                let s = if i % 2 == 0 { 1.0 } else { -1.0 };
                s * (1.0 + i as f64 / (n.max(2) - 1) as f64)
            }),
        );
        let alt_est = 2.0 * self.solve(&alt).iter().map(|v| v.abs()).sum::<f64>() / (3.0 * n as f64);
        est.max(alt_est) * self.norm1
    }
}

/// Maximum absolute column sum.
pub fn norm1(a: &DMatrix<f64>) -> f64 {
    a.column_iter()
        .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn sample(n: usize, seed: u64) -> DMatrix<f64> {
        let mut s = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        DMatrix::from_fn(n, n, |_, _| {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((s >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        })
    }

    #[test]
    fn solves_match_nalgebra() {
        for seed in 0..5 {
            let a = sample(12, seed);
            let b = DVector::from_fn(12, |i, _| i as f64 - 4.0);
            let lu = Lu::factor(a.clone()).unwrap();
            let x = lu.solve(&b);
            let expected = a.clone().lu().solve(&b).unwrap();
            assert_relative_eq!(x, expected, epsilon = 1e-9);
            let xt = lu.solve_transpose(&b);
            assert_relative_eq!(a.transpose() * xt, b, epsilon = 1e-9);
        }
    }

    #[test]
    fn singular_matrix_is_rejected() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        assert!(Lu::factor(a).is_err());
    }

    #[test]
    fn condition_estimate_is_close_to_exact() {
        for seed in 0..5 {
            let a = sample(10, seed);
            let inv = a.clone().try_inverse().unwrap();
            let exact = norm1(&a) * norm1(&inv);
            let est = Lu::factor(a).unwrap().condition_estimate();
            // the estimate is a lower bound that is usually within a small factor
            assert!(est <= exact * (1.0 + 1e-10));
            assert!(est >= exact / 10.0, "est {est} exact {exact}");
        }
        let diag = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 1e-13]));
        assert!(Lu::factor(diag).unwrap().condition_estimate() > 1e12);
    }
}
