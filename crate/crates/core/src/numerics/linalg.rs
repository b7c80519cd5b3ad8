//! Helpers for small dense symmetric matrices.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Eigendecomposition of a symmetric matrix, eigenvalues ascending.
#[derive(Debug, Clone)]
pub struct SymEigen {
    pub values: DVector<f64>,
    pub vectors: DMatrix<f64>,
}

impl SymEigen {
    pub fn new(m: &DMatrix<f64>) -> Result<Self> {
        let n = m.nrows();
        if n != m.ncols() {
            return Err(Error::Validation(format!(
                "matrix is {}x{}, expected square",
                n,
                m.ncols()
            )));
        }
        if m.iter().any(|x| !x.is_finite()) {
            return Err(Error::Validation("matrix has non-finite entries".into()));
        }
        let sym = 0.5 * (m + m.transpose());
        let eig = SymmetricEigen::new(sym);
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let values = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
        let mut vectors = DMatrix::zeros(n, n);
        for (col, &i) in order.iter().enumerate() {
            vectors.set_column(col, &eig.eigenvectors.column(i));
        }
        Ok(Self { values, vectors })
    }

    /// `U diag(f(values)) Uᵀ`.
    pub fn apply<F: Fn(f64) -> f64>(&self, f: F) -> DMatrix<f64> {
        let d = DMatrix::from_diagonal(&self.values.map(f));
        &self.vectors * d * self.vectors.transpose()
    }

    pub fn min(&self) -> f64 {
        self.values[0]
    }

    pub fn max(&self) -> f64 {
        self.values[self.values.len() - 1]
    }
}

/// Principal square root of a symmetric positive semi-definite matrix.
pub fn sqrtm(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let eig = SymEigen::new(m)?;
    if eig.min() < -1e-12 * eig.max().abs().max(1.0) {
        return Err(Error::Decomposition(format!(
            "square root of an indefinite matrix (min eigenvalue {})",
            eig.min()
        )));
    }
    Ok(eig.apply(|x| x.max(0.0).sqrt()))
}

pub fn is_symmetric(m: &DMatrix<f64>, rel_tol: f64) -> bool {
    let scale = m.amax().max(f64::MIN_POSITIVE);
    (m - m.transpose()).amax() <= rel_tol * scale
}

/// Lower Cholesky factor; fails unless `m` is symmetric positive definite.
pub fn cholesky_lower(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if !is_symmetric(m, 1e-10) {
        return Err(Error::Decomposition("covariance is not symmetric".into()));
    }
    nalgebra::Cholesky::new(m.clone())
        .map(|c| c.l())
        .ok_or_else(|| Error::Decomposition("covariance is not positive definite".into()))
}

pub fn from_rows(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let n = rows.len();
    let m = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != m) {
        return Err(Error::Validation("ragged matrix rows".into()));
    }
    Ok(DMatrix::from_fn(n, m, |i, j| rows[i][j]))
}

pub fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| m.row(i).iter().copied().collect())
        .collect()
}
