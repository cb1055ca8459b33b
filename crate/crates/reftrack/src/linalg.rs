//! Dense Cholesky factorization for the regularized Gram systems.
//!
//! The Gram matrices here are small (tens of points), so a plain LL^T
//! with explicit pivot reporting beats pulling in a full decomposition
//! stack: failures name the offending pivot, and the log-determinant
//! falls out of the factor diagonal.

use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};

/// Lower-triangular Cholesky factor of a symmetric positive definite matrix.
#[derive(Debug, Clone)]
pub struct CholeskyFactor {
    l: DMatrix<f64>,
}

impl CholeskyFactor {
    /// Factor `a = L L^T`. Fails with the smallest pivot encountered when
    /// the matrix is not numerically positive definite.
    pub fn new(a: &DMatrix<f64>) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(Error::Numerical(format!(
                "cholesky requires a square matrix, got {}x{}",
                n,
                a.ncols()
            )));
        }
        let mut l = DMatrix::zeros(n, n);
        let mut min_pivot = f64::INFINITY;
        for j in 0..n {
            let mut diag = a[(j, j)];
            for k in 0..j {
                diag -= l[(j, k)] * l[(j, k)];
            }
            min_pivot = min_pivot.min(diag);
            if !(diag > 0.0) || !diag.is_finite() {
                return Err(Error::Numerical(format!(
                    "gram factorization failed at row {j}: smallest pivot {min_pivot:.6e}"
                )));
            }
            let root = diag.sqrt();
            l[(j, j)] = root;
            for i in (j + 1)..n {
                let mut sum = a[(i, j)];
                for k in 0..j {
                    sum -= l[(i, k)] * l[(j, k)];
                }
                l[(i, j)] = sum / root;
            }
        }
        Ok(Self { l })
    }

    pub fn dim(&self) -> usize {
        self.l.nrows()
    }

    /// Solve `A x = b` via forward/backward substitution.
    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        let n = self.dim();
        assert_eq!(b.len(), n, "rhs length mismatch");
        let mut y = DVector::zeros(n);
        for i in 0..n {
            let mut sum = b[i];
            for k in 0..i {
                sum -= self.l[(i, k)] * y[k];
            }
            y[i] = sum / self.l[(i, i)];
        }
        let mut x = DVector::zeros(n);
        for i in (0..n).rev() {
            let mut sum = y[i];
            for k in (i + 1)..n {
                sum -= self.l[(k, i)] * x[k];
            }
            x[i] = sum / self.l[(i, i)];
        }
        x
    }

    /// ln det A, from the factor diagonal.
    pub fn log_determinant(&self) -> f64 {
        (0..self.dim()).map(|i| self.l[(i, i)].ln()).sum::<f64>() * 2.0
    }
}
