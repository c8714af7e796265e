//! Matrix kernels used by every stage of training and inference.
//!
//! All routines are pure functions on borrowed inputs. Dense matrices are
//! `nalgebra::DMatrix<f64>`; the rating matrix is a CSR sparse matrix and is
//! only ever touched through sparse-times-dense products.

mod eigen;
mod pca;
mod procrustes;
mod sparse;
mod svd;
mod sylvester;

pub use eigen::{symmetric_eigen, trailing_eigvecs, EigenPair};
pub use pca::{pca_reduce, PcaBasis};
pub use procrustes::orthogonal_procrustes;
pub use sparse::CsrMatrix;
pub use svd::{truncated_svd, truncated_svd_with, SvdOptions, TruncatedSvd};
pub use sylvester::solve_sylvester;

use nalgebra::DMatrix;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NumericsError {
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("{routine} did not converge after {iterations} iterations")]
    NoConvergence { routine: &'static str, iterations: usize },
    #[error("singular Sylvester system: eigenvalue-pair sum {sum:e} is below {threshold:e}")]
    Singular { sum: f64, threshold: f64 },
    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),
    #[error("non-finite input to {0}")]
    NonFinite(&'static str),
}

pub type Result<T> = std::result::Result<T, NumericsError>;

pub(crate) fn ensure_finite(m: &DMatrix<f64>, routine: &'static str) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(NumericsError::NonFinite(routine))
    }
}

/// Checks squareness and symmetry, returning the symmetrized copy.
pub(crate) fn symmetrized(m: &DMatrix<f64>, routine: &'static str) -> Result<DMatrix<f64>> {
    if m.nrows() != m.ncols() {
        return Err(NumericsError::Dimension(format!("{routine}: expected a square matrix, got {}x{}", m.nrows(), m.ncols())));
    }
    ensure_finite(m, routine)?;
    let scale = m.amax().max(1.0);
    let asym = (m - m.transpose()).amax();
    if asym > 1e-10 * scale {
        return Err(NumericsError::NotSymmetric(asym));
    }
    Ok((m + m.transpose()) * 0.5)
}

/// Frobenius distance of `mᵀm` from the identity.
pub fn orthogonality_error(m: &DMatrix<f64>) -> f64 {
    let gram = m.transpose() * m;
    (gram - DMatrix::identity(m.ncols(), m.ncols())).norm()
}

/// Flips each column so its largest-magnitude entry is positive.
pub(crate) fn fix_column_signs(m: &mut DMatrix<f64>) {
    for mut col in m.column_iter_mut() {
        if col.is_empty() {
            continue;
        }
        let idx = col.iamax();
        if col[idx] < 0.0 {
            col.neg_mut();
        }
    }
}
