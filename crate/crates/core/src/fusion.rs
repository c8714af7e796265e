//! Multi-feature fusion: self-weighted linear maps from each content view
//! onto the consensus representation `H`, with a low-rank penalty on every
//! projection.

use nalgebra::{DMatrix, DVector};

use crate::numerics::{self, solve_sylvester, trailing_eigvecs, NumericsError};

/// Smallest view weight used as a divisor.
pub const MU_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct FusionState {
    /// Consensus representation, r×n.
    pub h: DMatrix<f64>,
    /// Per-view projections, r×d_m.
    pub w: Vec<DMatrix<f64>>,
    /// View weights on the probability simplex.
    pub mu: DVector<f64>,
    /// Per-view bases of the r − k trailing eigenvectors of W Wᵀ.
    pub v: Vec<DMatrix<f64>>,
    pub rank_budget: usize,
    pub gamma: f64,
}

impl FusionState {
    pub fn bits(&self) -> usize {
        self.h.nrows()
    }

    pub fn n_views(&self) -> usize {
        self.w.len()
    }

    pub fn check(&self) -> numerics::Result<()> {
        let r = self.bits();
        if self.rank_budget > r {
            return Err(NumericsError::Parameter(format!("rank budget {} exceeds code length {r}", self.rank_budget)));
        }
        if self.mu.len() != self.w.len() || self.v.len() != self.w.len() {
            return Err(NumericsError::Dimension("view count differs between W, V and mu".into()));
        }
        if self.mu.iter().any(|&m| m < 0.0) || (self.mu.sum() - 1.0).abs() > 1e-10 {
            return Err(NumericsError::Parameter(format!("mu {:?} is not on the simplex", self.mu.as_slice())));
        }
        for (w, v) in self.w.iter().zip(&self.v) {
            if w.nrows() != r || v.nrows() != r {
                return Err(NumericsError::Dimension("projection or basis row count differs from r".into()));
            }
        }
        Ok(())
    }
}

fn check_views(h: &DMatrix<f64>, x: &[DMatrix<f64>]) -> numerics::Result<()> {
    for (m, xm) in x.iter().enumerate() {
        if xm.ncols() != h.ncols() {
            return Err(NumericsError::Dimension(format!("view {m} has {} columns, H has {}", xm.ncols(), h.ncols())));
        }
    }
    Ok(())
}

/// `1 / max(μ, MU_FLOOR)` per view.
pub fn inverse_weights(mu: &DVector<f64>) -> Vec<f64> {
    mu.iter().map(|&m| 1.0 / m.max(MU_FLOOR)).collect()
}

/// `‖H − W⁽ᵐ⁾X⁽ᵐ⁾‖_F` per view.
pub fn view_residuals(h: &DMatrix<f64>, w: &[DMatrix<f64>], x: &[DMatrix<f64>]) -> Vec<f64> {
    w.iter().zip(x).map(|(wm, xm)| (h - wm * xm).norm()).collect()
}

/// Closed-form weights for fixed residual norms: `μ ∝ h`, uniform when all
/// residuals vanish.
pub fn weights_from_residuals(h: &[f64]) -> DVector<f64> {
    let total: f64 = h.iter().sum();
    if total > 0.0 && total.is_finite() {
        DVector::from_iterator(h.len(), h.iter().map(|v| v / total))
    } else {
        DVector::from_element(h.len(), 1.0 / h.len() as f64)
    }
}

pub fn update_weights(h: &DMatrix<f64>, w: &[DMatrix<f64>], x: &[DMatrix<f64>]) -> DVector<f64> {
    weights_from_residuals(&view_residuals(h, w, x))
}

/// Solves `γVVᵀW + W((1/μ)XXᵀ + εI) = (1/μ)HXᵀ` for every view.
pub fn update_projections(
    h: &DMatrix<f64>,
    x: &[DMatrix<f64>],
    mu: &DVector<f64>,
    v: &[DMatrix<f64>],
    gamma: f64,
    ridge: f64,
) -> numerics::Result<Vec<DMatrix<f64>>> {
    check_views(h, x)?;
    let inv = inverse_weights(mu);
    x.iter()
        .zip(v)
        .zip(inv)
        .map(|((xm, vm), im)| {
            let a = (vm * vm.transpose()) * gamma;
            let mut b = (xm * xm.transpose()) * im;
            for i in 0..b.nrows() {
                b[(i, i)] += ridge;
            }
            let c = (h * xm.transpose()) * im;
            solve_sylvester(&a, &b, &c)
        })
        .collect()
}

/// `V⁽ᵐ⁾` = eigenvectors of the `r − k` smallest eigenvalues of `W⁽ᵐ⁾W⁽ᵐ⁾ᵀ`.
pub fn update_lowrank_basis(w: &[DMatrix<f64>], rank_budget: usize) -> numerics::Result<Vec<DMatrix<f64>>> {
    w.iter()
        .map(|wm| {
            let r = wm.nrows();
            if rank_budget > r {
                return Err(NumericsError::Parameter(format!("rank budget {rank_budget} exceeds code length {r}")));
            }
            trailing_eigvecs(&(wm * wm.transpose()), r - rank_budget)
        })
        .collect()
}

/// `tr(VᵀWWᵀV) = ‖VᵀW‖²_F`.
pub fn rank_penalty(w: &DMatrix<f64>, v: &DMatrix<f64>) -> f64 {
    (v.transpose() * w).norm_squared()
}

/// `Σ (1/μ)‖H − WX‖²_F + γ Σ tr(VᵀWWᵀV)`.
pub fn fusion_objective(state: &FusionState, x: &[DMatrix<f64>]) -> f64 {
    let inv = inverse_weights(&state.mu);
    let fit: f64 = view_residuals(&state.h, &state.w, x).iter().zip(&inv).map(|(h, i)| i * h * h).sum();
    let penalty: f64 = state.w.iter().zip(&state.v).map(|(w, v)| rank_penalty(w, v)).sum();
    fit + state.gamma * penalty
}
