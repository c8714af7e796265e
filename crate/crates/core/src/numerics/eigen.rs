use nalgebra::{DMatrix, DVector, SymmetricEigen};

use super::{fix_column_signs, symmetrized, NumericsError, Result};

/// Eigendecomposition of a symmetric matrix, eigenvalues ascending.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenPair {
    pub values: DVector<f64>,
    /// Orthonormal columns, `vectors[:, i]` pairs with `values[i]`.
    pub vectors: DMatrix<f64>,
}

pub fn symmetric_eigen(g: &DMatrix<f64>) -> Result<EigenPair> {
    let g = symmetrized(g, "symmetric_eigen")?;
    let n = g.nrows();
    if n == 0 {
        return Ok(EigenPair { values: DVector::zeros(0), vectors: DMatrix::zeros(0, 0) });
    }
    let eig = SymmetricEigen::new(g);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]).then(a.cmp(&b)));
    let values = DVector::from_fn(n, |i, _| eig.eigenvalues[order[i]]);
    let mut vectors = DMatrix::from_fn(n, n, |i, j| eig.eigenvectors[(i, order[j])]);
    fix_column_signs(&mut vectors);
    Ok(EigenPair { values, vectors })
}

/// Orthonormal eigenvectors for the `count` smallest eigenvalues of `g`.
pub fn trailing_eigvecs(g: &DMatrix<f64>, count: usize) -> Result<DMatrix<f64>> {
    if count > g.nrows() {
        return Err(NumericsError::Parameter(format!("requested {count} eigenvectors of a {}x{} matrix", g.nrows(), g.ncols())));
    }
    if count == 0 {
        return Ok(DMatrix::zeros(g.nrows(), 0));
    }
    let pair = symmetric_eigen(g)?;
    Ok(pair.vectors.columns(0, count).into_owned())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::orthogonality_error;
    use crate::rng;

    #[test]
    fn diagonal_smallest() {
        let g = DMatrix::from_diagonal(&DVector::from_vec(vec![5.0, 1.0, 3.0]));
        let v = trailing_eigvecs(&g, 1).unwrap();
        assert_eq!(v.shape(), (3, 1));
        assert!((v[(1, 0)].abs() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn zero_count_is_empty() {
        let g = DMatrix::<f64>::identity(4, 4);
        assert_eq!(trailing_eigvecs(&g, 0).unwrap().shape(), (4, 0));
        assert!(trailing_eigvecs(&g, 5).is_err());
    }

    #[test]
    fn penalty_equals_sum_of_smallest() {
        let mut r = rng::stream(2, "t");
        let w = rng::gaussian_matrix(&mut r, 6, 9);
        let g = &w * w.transpose();
        let v = trailing_eigvecs(&g, 2).unwrap();
        let penalty = (v.transpose() * &g * &v).trace();
        // oracle: squared singular values of W
        let mut sv: Vec<f64> = w.svd(false, false).singular_values.iter().map(|s| s * s).collect();
        sv.sort_by(|a, b| a.total_cmp(b));
        assert!((penalty - (sv[0] + sv[1])).abs() < 1e-8);
        assert!(orthogonality_error(&v) < 1e-10);
    }

    #[test]
    fn asymmetric_rejected() {
        let g = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 0.0, 1.0]);
        assert!(matches!(symmetric_eigen(&g), Err(NumericsError::NotSymmetric(_))));
    }
}
