//! Dense least-squares solvers.
//!
//! Thin wrappers around nalgebra: Cholesky for positive-definite ridge
//! systems, SVD pseudo-inverse for everything rank deficient.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Singular values below `PINV_RCOND * max_singular_value` are treated as zero.
pub const PINV_RCOND: f64 = 1e-10;

/// Solve `a x = b` in the least-squares / minimum-norm sense via SVD.
pub fn pinv_solve(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    let svd = a.clone().svd(true, true);
    let max_sv = svd.singular_values.iter().copied().fold(0.0, f64::max);
    if !max_sv.is_finite() {
        return Err(Error::Numeric(
            "non-finite matrix in least-squares solve".into(),
        ));
    }
    let eps = (PINV_RCOND * max_sv).max(f64::MIN_POSITIVE);
    svd.solve(b, eps).map_err(|e| Error::Numeric(e.to_string()))
}

/// Moore-Penrose pseudo-inverse with the crate-wide singular value cutoff.
pub fn pinv(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let svd = a.clone().svd(true, true);
    let max_sv = svd.singular_values.iter().copied().fold(0.0, f64::max);
    let eps = (PINV_RCOND * max_sv).max(f64::MIN_POSITIVE);
    svd.pseudo_inverse(eps)
        .map_err(|e| Error::Numeric(e.to_string()))
}

/// Row vector `v^T (X^T X)^+ X^T`: the OLS weights that map targets `y` to
/// the prediction `v^T w*`.
pub fn hat_row(design: &DMatrix<f64>, v: &DVector<f64>) -> Result<DVector<f64>> {
    Ok(pinv(design)?.transpose() * v)
}

/// Accumulated normal equations for a ridge problem.
///
/// Column 0 is treated as the intercept when `free_intercept` is set and is
/// excluded from the penalty.
#[derive(Debug, Clone)]
pub struct NormalEquations {
    pub gram: DMatrix<f64>,
    pub rhs: DVector<f64>,
    pub rows: usize,
}

impl NormalEquations {
    pub fn new(dim: usize) -> Self {
        Self {
            gram: DMatrix::zeros(dim, dim),
            rhs: DVector::zeros(dim),
            rows: 0,
        }
    }

    pub fn dim(&self) -> usize {
        self.rhs.len()
    }

    /// Add one row given as sparse `(index, value)` pairs.
    pub fn add_sparse(&mut self, row: &[(usize, f64)], target: f64) {
        for &(i, vi) in row {
            self.rhs[i] += vi * target;
            for &(j, vj) in row {
                self.gram[(i, j)] += vi * vj;
            }
        }
        self.rows += 1;
    }

    fn penalized(&self, ridge: f64, free_intercept: bool) -> DMatrix<f64> {
        let mut a = self.gram.clone();
        for i in 0..a.nrows() {
            if !(free_intercept && i == 0) {
                a[(i, i)] += ridge;
            }
        }
        a
    }

    /// Solve `(X^T X + ridge * D) w = X^T y`. Uses Cholesky when the system
    /// is positive definite and falls back to the pseudo-inverse otherwise.
    pub fn solve(&self, ridge: f64, free_intercept: bool, fallback: bool) -> Result<DVector<f64>> {
        let a = self.penalized(ridge, free_intercept);
        if ridge > 0.0 {
            if let Some(chol) = a.clone().cholesky() {
                let w = chol.solve(&self.rhs);
                if w.iter().all(|v| v.is_finite()) {
                    return Ok(w);
                }
            }
        }
        if !fallback {
            return Err(Error::Numeric(
                "ridge system is singular and pseudo-inverse fallback is disabled".into(),
            ));
        }
        pinv_solve(&a, &self.rhs)
    }

    /// Max-norm residual of the penalized normal equations at `w`.
    pub fn residual(&self, w: &DVector<f64>, ridge: f64, free_intercept: bool) -> f64 {
        let a = self.penalized(ridge, free_intercept);
        (a * w - &self.rhs).amax()
    }
}
