use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{CsrMatrix, NumericsError, Result};
use crate::rng;

/// Rank-`o` factors of a sparse matrix: `M ≈ left · diag(singulars) · right`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruncatedSvd {
    /// n×o, orthonormal columns.
    pub left: DMatrix<f64>,
    /// Descending, non-negative.
    pub singulars: DVector<f64>,
    /// o×m, orthonormal rows.
    pub right: DMatrix<f64>,
    pub source_shape: (usize, usize),
}

impl TruncatedSvd {
    pub fn rank(&self) -> usize {
        self.singulars.len()
    }

    /// `‖left·Σ·right‖²_F`, which equals the sum of squared singular values.
    pub fn frobenius_norm_sq(&self) -> f64 {
        self.singulars.iter().map(|s| s * s).sum()
    }

    /// Dense reconstruction; n×m, so only for small inputs.
    pub fn reconstruct(&self) -> DMatrix<f64> {
        let mut ls = self.left.clone();
        for (j, s) in self.singulars.iter().enumerate() {
            ls.column_mut(j).scale_mut(*s);
        }
        ls * &self.right
    }
}

/// Randomized subspace iteration settings.
#[derive(Debug, Clone, PartialEq)]
pub struct SvdOptions {
    /// Extra basis vectors beyond `o`; the block is clipped to `min(n, m)`.
    pub oversample: usize,
    pub max_iters: usize,
    /// Stop when the leading `o` singular values move by less than
    /// `tol · σ₁` between sweeps.
    pub tol: f64,
    pub seed: u64,
}

impl Default for SvdOptions {
    fn default() -> Self {
        Self { oversample: 32, max_iters: 300, tol: 1e-9, seed: 0 }
    }
}

pub fn truncated_svd(m: &CsrMatrix, o: usize) -> Result<TruncatedSvd> {
    truncated_svd_with(m, o, &SvdOptions::default())
}

/// Truncated SVD by block subspace iteration with Rayleigh–Ritz extraction.
///
/// Only sparse×dense products with n×l and m×l blocks are formed. When the
/// block spans `min(n, m)` columns the result is exact after one pass.
pub fn truncated_svd_with(m: &CsrMatrix, o: usize, opts: &SvdOptions) -> Result<TruncatedSvd> {
    let (n, cols) = m.shape();
    let full = n.min(cols);
    if o == 0 || o > full {
        return Err(NumericsError::Parameter(format!("svd rank {o} must be in 1..={full} for a {n}x{cols} matrix")));
    }
    if m.nnz() == 0 {
        return Err(NumericsError::Parameter("matrix has no nonzero entries".into()));
    }
    let block = (o + opts.oversample).min(full);
    let exact = block == full;

    let mut stream = rng::stream(opts.seed, rng::SVD);
    let omega = rng::gaussian_matrix(&mut stream, cols, block);
    let mut q = orthonormalize(m.mul_dense(&omega));
    let mut previous: Option<DVector<f64>> = None;
    let mut sweeps = 0;
    loop {
        // Bᵀ = Mᵀ Q, and M ≈ Q B = (Q V) Σ Uᵀ for Bᵀ = U Σ Vᵀ
        let bt = m.tr_mul_dense(&q);
        let svd = bt.clone().svd(true, true);
        let sigma = svd.singular_values.clone();
        let converged = exact
            || previous.as_ref().is_some_and(|prev| {
                let top = sigma.max();
                let mut sorted_now: Vec<f64> = sigma.iter().copied().collect();
                let mut sorted_prev: Vec<f64> = prev.iter().copied().collect();
                sorted_now.sort_by(|a, b| b.total_cmp(a));
                sorted_prev.sort_by(|a, b| b.total_cmp(a));
                sorted_now.iter().zip(&sorted_prev).take(o).all(|(a, b)| (a - b).abs() <= opts.tol * top.max(f64::MIN_POSITIVE))
            });
        if converged {
            let u = svd.u.expect("svd requested with u");
            let vt = svd.v_t.expect("svd requested with v_t");
            return Ok(extract(&q, &u, &vt, &sigma, o, (n, cols)));
        }
        if sweeps >= opts.max_iters {
            return Err(NumericsError::NoConvergence { routine: "truncated_svd", iterations: sweeps });
        }
        previous = Some(sigma);
        let z = orthonormalize(bt);
        q = orthonormalize(m.mul_dense(&z));
        sweeps += 1;
    }
}

fn orthonormalize(x: DMatrix<f64>) -> DMatrix<f64> {
    x.qr().q()
}

fn extract(q: &DMatrix<f64>, u: &DMatrix<f64>, vt: &DMatrix<f64>, sigma: &DVector<f64>, o: usize, shape: (usize, usize)) -> TruncatedSvd {
    let mut order: Vec<usize> = (0..sigma.len()).collect();
    order.sort_by(|&a, &b| sigma[b].total_cmp(&sigma[a]).then(a.cmp(&b)));
    order.truncate(o);

    let v = vt.transpose();
    let ritz = DMatrix::from_fn(v.nrows(), o, |i, k| v[(i, order[k])]);
    let mut left = q * ritz;
    let mut right = DMatrix::from_fn(o, u.nrows(), |k, j| u[(j, order[k])]);
    let singulars = DVector::from_fn(o, |k, _| sigma[order[k]].max(0.0));

    for k in 0..o {
        let row = right.row(k);
        let (_, idx) = row.iamax_full();
        if row[idx] < 0.0 {
            right.row_mut(k).neg_mut();
            left.column_mut(k).neg_mut();
        }
    }
    TruncatedSvd { left, singulars, right, source_shape: shape }
}
