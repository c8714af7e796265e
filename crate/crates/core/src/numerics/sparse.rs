use nalgebra::DMatrix;

use super::{NumericsError, Result};

/// Compressed sparse row matrix. Absent entries are exact zeros.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<u32>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds from `(row, col, value)` triplets. When a position repeats, the
    /// last occurrence wins.
    pub fn from_triplets<I>(nrows: usize, ncols: usize, triplets: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize, f64)>,
    {
        let mut entries: Vec<(usize, usize, f64)> = triplets.into_iter().collect();
        for &(i, j, v) in &entries {
            if i >= nrows || j >= ncols {
                return Err(NumericsError::Dimension(format!("entry ({i}, {j}) outside {nrows}x{ncols}")));
            }
            if !v.is_finite() {
                return Err(NumericsError::NonFinite("CsrMatrix::from_triplets"));
            }
        }
        // stable sort keeps insertion order among duplicates
        entries.sort_by_key(|&(i, j, _)| (i, j));
        let mut dedup: Vec<(usize, usize, f64)> = Vec::with_capacity(entries.len());
        for e in entries {
            match dedup.last_mut() {
                Some(last) if last.0 == e.0 && last.1 == e.1 => *last = e,
                _ => dedup.push(e),
            }
        }
        let mut row_ptr = vec![0usize; nrows + 1];
        for &(i, _, _) in &dedup {
            row_ptr[i + 1] += 1;
        }
        for i in 0..nrows {
            row_ptr[i + 1] += row_ptr[i];
        }
        let col_idx = dedup.iter().map(|&(_, j, _)| j as u32).collect();
        let values = dedup.iter().map(|&(_, _, v)| v).collect();
        Ok(Self { nrows, ncols, row_ptr, col_idx, values })
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.nrows, self.ncols)
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn frobenius_norm_sq(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.nrows)
            .flat_map(move |i| (self.row_ptr[i]..self.row_ptr[i + 1]).map(move |p| (i, self.col_idx[p] as usize, self.values[p])))
    }

    /// `self · x` for a dense `x` with `ncols` rows.
    pub fn mul_dense(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        assert_eq!(x.nrows(), self.ncols, "CsrMatrix::mul_dense shape mismatch");
        // work on transposes so every inner update is a contiguous column axpy
        let xt = x.transpose();
        let mut yt = DMatrix::zeros(x.ncols(), self.nrows);
        for i in 0..self.nrows {
            let mut out = yt.column_mut(i);
            for p in self.row_ptr[i]..self.row_ptr[i + 1] {
                out.axpy(self.values[p], &xt.column(self.col_idx[p] as usize), 1.0);
            }
        }
        yt.transpose()
    }

    /// `selfᵀ · x` for a dense `x` with `nrows` rows.
    pub fn tr_mul_dense(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        assert_eq!(x.nrows(), self.nrows, "CsrMatrix::tr_mul_dense shape mismatch");
        let xt = x.transpose();
        let mut yt = DMatrix::zeros(x.ncols(), self.ncols);
        for i in 0..self.nrows {
            let src = xt.column(i);
            for p in self.row_ptr[i]..self.row_ptr[i + 1] {
                yt.column_mut(self.col_idx[p] as usize).axpy(self.values[p], &src, 1.0);
            }
        }
        yt.transpose()
    }

    /// Dense copy. Only meant for small matrices (tests, diagnostics).
    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut d = DMatrix::zeros(self.nrows, self.ncols);
        for (i, j, v) in self.iter() {
            d[(i, j)] = v;
        }
        d
    }
}
