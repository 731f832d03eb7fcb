//! Small dense helpers on top of nalgebra: symmetric solves with a
//! pseudo-inverse fallback, PSD checks and non-symmetric solves.

use nalgebra::linalg::{Cholesky, SymmetricEigen};
use nalgebra::Dyn;

use crate::error::{Error, Result};
use crate::kron::{symmetrize, Matrix, Vector};

/// Eigenvalues below this fraction of the trace count as zero.
pub const PINV_RELATIVE_THRESHOLD: f64 = 1e-12;

/// Applies the inverse of a symmetric positive semidefinite matrix.
///
/// A Cholesky factorization is used when the smallest eigenvalue is at least
/// [`PINV_RELATIVE_THRESHOLD`]·trace; otherwise the eigenvalue-thresholded
/// pseudo-inverse is formed and [`SymmetricInverse::is_pseudo`] reports it.
#[derive(Clone, Debug)]
pub struct SymmetricInverse {
    inner: Inner,
}

#[derive(Clone, Debug)]
enum Inner {
    Cholesky(Cholesky<f64, Dyn>),
    Pseudo(Matrix),
}

impl SymmetricInverse {
    pub fn new(m: &Matrix) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::dim(
                "symmetric inverse",
                "square matrix",
                format!("{:?}", m.shape()),
            ));
        }
        if m.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("matrix to invert".into()));
        }
        let m = symmetrize(m);
        if m.nrows() == 0 {
            return Ok(Self {
                inner: Inner::Pseudo(m),
            });
        }
        let eig = SymmetricEigen::new(m.clone());
        let trace = m.trace().abs();
        let min = eig.eigenvalues.min();
        if min >= PINV_RELATIVE_THRESHOLD * trace && min > 0.0 {
            if let Some(chol) = Cholesky::new(m.clone()) {
                return Ok(Self {
                    inner: Inner::Cholesky(chol),
                });
            }
        }
        log::debug!("near-singular {}x{} matrix (min eigenvalue {min:e}, trace {trace:e}): using pseudo-inverse", m.nrows(), m.ncols());
        Ok(Self {
            inner: Inner::Pseudo(pinv_from_eigen(&eig, trace)),
        })
    }

    pub fn is_pseudo(&self) -> bool {
        matches!(self.inner, Inner::Pseudo(_))
    }

    pub fn solve(&self, rhs: &Matrix) -> Matrix {
        match &self.inner {
            Inner::Cholesky(c) => c.solve(rhs),
            Inner::Pseudo(p) => p * rhs,
        }
    }

    pub fn solve_vec(&self, rhs: &Vector) -> Vector {
        match &self.inner {
            Inner::Cholesky(c) => c.solve(rhs),
            Inner::Pseudo(p) => p * rhs,
        }
    }

    /// `rhs · M⁻¹` for a row-oriented right-hand side.
    pub fn solve_right(&self, lhs: &Matrix) -> Matrix {
        self.solve(&lhs.transpose()).transpose()
    }
}

fn pinv_from_eigen(eig: &SymmetricEigen<f64, Dyn>, trace: f64) -> Matrix {
    let cutoff = PINV_RELATIVE_THRESHOLD * trace;
    let n = eig.eigenvalues.len();
    let mut out = Matrix::zeros(n, n);
    for (i, &l) in eig.eigenvalues.iter().enumerate() {
        if l > cutoff && l > 0.0 {
            let v = eig.eigenvectors.column(i);
            out += (v * v.transpose()) / l;
        }
    }
    out
}

/// Eigenvalue-thresholded pseudo-inverse of a symmetric matrix.
pub fn pseudo_inverse_sym(m: &Matrix) -> Matrix {
    let m = symmetrize(m);
    let trace = m.trace().abs();
    pinv_from_eigen(&SymmetricEigen::new(m), trace)
}

pub fn min_eigenvalue(m: &Matrix) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    SymmetricEigen::new(symmetrize(m)).eigenvalues.min()
}

/// Symmetric (to `sym_tol`, absolute) with eigenvalues `≥ -eig_tol`.
pub fn is_psd(m: &Matrix, sym_tol: f64, eig_tol: f64) -> bool {
    m.is_square() && asymmetry(m) <= sym_tol && min_eigenvalue(m) >= -eig_tol
}

pub fn asymmetry(m: &Matrix) -> f64 {
    (m - m.transpose())
        .iter()
        .fold(0.0_f64, |a, x| a.max(x.abs()))
}

/// Solves `A X = B` by LU; `what` names the operand for the error message.
pub fn lu_solve(a: &Matrix, b: &Matrix, what: &str) -> Result<Matrix> {
    a.clone()
        .lu()
        .solve(b)
        .filter(|x| x.iter().all(|v| v.is_finite()))
        .ok_or_else(|| Error::Singular(what.to_string()))
}

/// Reciprocal 2-norm condition number `σ_min / σ_max` (0 for the zero matrix).
pub fn reciprocal_condition(a: &Matrix) -> f64 {
    let sv = a.clone().svd(false, false).singular_values;
    let max = sv.max();
    if max == 0.0 {
        0.0
    } else {
        sv.min() / max
    }
}

/// A symmetric square root `S` with `S Sᵀ = M` for PSD `M`, clamping tiny
/// negative eigenvalues to zero. Works for singular covariances.
pub fn psd_sqrt(m: &Matrix) -> Matrix {
    let n = m.nrows();
    if n == 0 {
        return m.clone();
    }
    let eig = SymmetricEigen::new(symmetrize(m));
    let mut out = Matrix::zeros(n, n);
    for (i, &l) in eig.eigenvalues.iter().enumerate() {
        if l > 0.0 {
            let v = eig.eigenvectors.column(i);
            out += (v * v.transpose()) * l.sqrt();
        }
    }
    out
}
