//! Thin adapters from `ndarray` storage to `nalgebra` dense solvers.

use nalgebra::{DMatrix, DVector};
use ndarray::{Array1, Array2};

use crate::error::{Error, Result};

pub(crate) fn to_nalgebra(a: &Array2<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[[i, j]])
}

/// Eigenvalues of a symmetric matrix, ascending.
pub fn symmetric_eigenvalues(a: &Array2<f64>) -> Vec<f64> {
    if a.is_empty() {
        return Vec::new();
    }
    let mut ev: Vec<f64> = to_nalgebra(a).symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

/// Spectral norm `max |lambda|` of a symmetric matrix.
pub fn symmetric_spectral_norm(a: &Array2<f64>) -> f64 {
    symmetric_eigenvalues(a).into_iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// `A^T A` (columns x columns).
pub fn gram_of_columns(a: &Array2<f64>) -> Array2<f64> {
    a.t().dot(a)
}

/// `A A^T` (rows x rows).
pub fn gram_of_rows(a: &Array2<f64>) -> Array2<f64> {
    a.dot(&a.t())
}

/// Largest singular value of a rectangular matrix, via the smaller Gram matrix.
pub fn spectral_norm(a: &Array2<f64>) -> f64 {
    let g = if a.nrows() <= a.ncols() {
        gram_of_rows(a)
    } else {
        gram_of_columns(a)
    };
    symmetric_spectral_norm(&g).sqrt()
}

/// Cholesky factorization of a symmetric positive definite matrix.
pub(crate) struct SpdSolver(nalgebra::Cholesky<f64, nalgebra::Dyn>);

impl SpdSolver {
    pub(crate) fn new(a: &Array2<f64>) -> Result<Self> {
        nalgebra::Cholesky::new(to_nalgebra(a))
            .map(SpdSolver)
            .ok_or_else(|| Error::Numerical("matrix is not positive definite".into()))
    }

    pub(crate) fn solve(&self, b: &Array1<f64>) -> Array1<f64> {
        let x = self.0.solve(&DVector::from_column_slice(b.as_slice().expect("contiguous")));
        Array1::from(x.as_slice().to_vec())
    }
}
