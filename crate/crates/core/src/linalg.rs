//! Small dense linear algebra helpers on top of `nalgebra`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::types::{symmetrize, FimMatrix};

/// Reciprocal condition numbers below this are reported as ill-conditioned.
pub const ILL_CONDITIONED_RCOND: f64 = 1e-12;

/// Inverse of a symmetric positive definite matrix with diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct SpdInverse {
    pub inverse: DMatrix<f64>,
    /// `λ_min / λ_max` of the input.
    pub rcond: f64,
    pub ill_conditioned: bool,
}

/// Inverts a symmetric matrix through its eigendecomposition.
///
/// Fails with [`Error::NotPositiveDefinite`] when any eigenvalue is `<= 0`.
pub fn invert_spd(m: &DMatrix<f64>) -> Result<SpdInverse> {
    if !m.is_square() {
        return Err(Error::DimensionMismatch(format!("{}x{} is not square", m.nrows(), m.ncols())));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("matrix has non-finite entries".into()));
    }
    let eig = SymmetricEigen::new(symmetrize(m));
    let min = eig.eigenvalues.min();
    let max = eig.eigenvalues.max();
    if !(min > 0.0) {
        return Err(Error::NotPositiveDefinite { min_eigenvalue: min });
    }
    let inv_vals = eig.eigenvalues.map(|l| 1.0 / l);
    let v = &eig.eigenvectors;
    let inverse = symmetrize(&(v * DMatrix::from_diagonal(&inv_vals) * v.transpose()));
    let rcond = min / max;
    Ok(SpdInverse { inverse, rcond, ill_conditioned: rcond < ILL_CONDITIONED_RCOND })
}

/// Inverse of a Fisher information matrix.
pub fn invert_fim(fim: &FimMatrix) -> Result<SpdInverse> {
    invert_spd(fim.entries())
}

/// True when `m` has a Cholesky factorization.
pub fn is_positive_definite(m: &DMatrix<f64>) -> bool {
    m.iter().all(|v| v.is_finite()) && symmetrize(m).cholesky().is_some()
}

/// Square root factor `L` with `L Lᵀ = M` for a positive semidefinite `M`;
/// negative round-off eigenvalues are clipped to zero.
pub fn psd_factor(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(symmetrize(m));
    let roots = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&roots)
}

/// Solves the discrete Lyapunov equation `Σ = A Σ Aᵀ + Q` by vectorization.
pub fn discrete_lyapunov(a: &DMatrix<f64>, q: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let l = a.nrows();
    if !a.is_square() || q.shape() != (l, l) {
        return Err(Error::DimensionMismatch("Lyapunov operands must be l x l".into()));
    }
    let kron = a.kronecker(a);
    let system = DMatrix::<f64>::identity(l * l, l * l) - kron;
    let rhs = DVector::from_column_slice(q.as_slice());
    let sol = system
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Domain("transition matrix is not stable".into()))?;
    Ok(symmetrize(&DMatrix::from_column_slice(l, l, sol.as_slice())))
}
