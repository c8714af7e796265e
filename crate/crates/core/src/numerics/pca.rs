use log::warn;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{ensure_finite, symmetric_eigen, NumericsError, Result};

/// Mean and principal axes learned from a d×n sample matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaBasis {
    pub mean: DVector<f64>,
    /// k×d, rows are unit principal directions by decreasing variance.
    pub components: DMatrix<f64>,
}

impl PcaBasis {
    pub fn dim(&self) -> usize {
        self.components.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.mean.len()
    }

    /// Projects d×n columns onto the stored axes (centering, no whitening).
    pub fn project(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut centered = x.clone();
        for mut col in centered.column_iter_mut() {
            col -= &self.mean;
        }
        &self.components * centered
    }
}

/// Projects the columns of `x` (d×n) onto the top `target_dim` principal
/// components of the centered data.
///
/// A `target_dim` above `min(d, n)` is clipped with a warning.
pub fn pca_reduce(x: &DMatrix<f64>, target_dim: usize) -> Result<(DMatrix<f64>, PcaBasis)> {
    let (d, n) = x.shape();
    if target_dim == 0 {
        return Err(NumericsError::Parameter("PCA target dimension must be positive".into()));
    }
    if d == 0 || n == 0 {
        return Err(NumericsError::Parameter(format!("PCA on an empty {d}x{n} matrix")));
    }
    ensure_finite(x, "pca_reduce")?;
    let limit = d.min(n);
    let k = if target_dim > limit {
        warn!("PCA target dimension {target_dim} exceeds min(d, n) = {limit}; clipping");
        limit
    } else {
        target_dim
    };

    let mean = x.column_mean();
    let mut centered = x.clone();
    for mut col in centered.column_iter_mut() {
        col -= &mean;
    }
    let cov = &centered * centered.transpose();
    let cov = (&cov + cov.transpose()) * 0.5;
    let eig = symmetric_eigen(&cov)?;
    // ascending order, so the leading axes are the last columns
    let components = DMatrix::from_fn(k, d, |i, j| eig.vectors[(j, d - 1 - i)]);
    let projected = &components * centered;
    Ok((projected, PcaBasis { mean, components }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    #[test]
    fn identical_columns_project_to_zero() {
        let x = DMatrix::from_fn(4, 6, |i, _| i as f64 + 1.0);
        let (y, _) = pca_reduce(&x, 2).unwrap();
        assert!(y.amax() < 1e-12);
    }

    #[test]
    fn exact_rank_two_reconstructs() {
        let mut r = rng::stream(4, "t");
        let a = rng::gaussian_matrix(&mut r, 7, 2);
        let b = rng::gaussian_matrix(&mut r, 2, 30);
        let x = &a * &b;
        let (y, basis) = pca_reduce(&x, 2).unwrap();
        let mut recon = basis.components.transpose() * &y;
        for mut col in recon.column_iter_mut() {
            col += &basis.mean;
        }
        assert!((recon - &x).norm() < 1e-8);
        assert!((basis.project(&x) - y).norm() < 1e-10);
    }

    #[test]
    fn clips_to_sample_rank() {
        let mut r = rng::stream(5, "t");
        let x = rng::gaussian_matrix(&mut r, 300, 100);
        let (y, basis) = pca_reduce(&x, 128).unwrap();
        assert_eq!(y.nrows(), 100);
        assert_eq!(basis.dim(), 100);
        assert!(pca_reduce(&x, 0).is_err());
    }

    #[test]
    fn output_rows_uncorrelated() {
        let mut r = rng::stream(6, "t");
        let mix = rng::gaussian_matrix(&mut r, 10, 10);
        let x = mix * rng::gaussian_matrix(&mut r, 10, 200);
        let (y, _) = pca_reduce(&x, 5).unwrap();
        let cov = &y * y.transpose() / (y.ncols() as f64 - 1.0);
        let max_var = cov.diagonal().max();
        for i in 0..5 {
            for j in 0..5 {
                if i != j {
                    assert!(cov[(i, j)].abs() < 1e-6 * max_var);
                }
            }
        }
        // variances decreasing
        assert!(cov.diagonal().as_slice().windows(2).all(|w| w[0] >= w[1] - 1e-9));
    }
}
