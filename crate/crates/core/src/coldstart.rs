//! Codes for users without ratings, from content features alone, using the
//! self-weighted alternation between view weights and binary codes.
//!
//! Each view is mapped into the item-code space by `R W⁽ᵐ⁾`: training codes
//! are `B = sgn(RH)` with `H ≈ W⁽ᵐ⁾X⁽ᵐ⁾`, so this is the projection whose
//! signs are comparable with D.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{encode_view_columns, DemoRecord, ViewEncoder};
use crate::fusion::weights_from_residuals;
use crate::solver::{sign, TrainedModel};

/// Floor on view residuals before normalizing them into weights.
pub const RESIDUAL_FLOOR: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum ColdStartError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("user record is empty")]
    EmptyRecord,
    #[error("user record has attributes unknown to the model: {0}")]
    UnknownAttributes(String),
    #[error("rating history references item {item} but the model has {items} items")]
    ItemOutOfRange { item: u32, items: usize },
}

pub type Result<T> = std::result::Result<T, ColdStartError>;

/// How view weights are shared across a batch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Weighting {
    /// Separate weights per user; each code depends only on its own columns.
    #[default]
    PerUser,
    /// One weight vector for the whole batch, from batch-level residuals.
    Batch,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ColdStartOptions {
    pub max_iters: usize,
    pub weighting: Weighting,
    /// Project with `R W⁽ᵐ⁾` (true) or with `W⁽ᵐ⁾` alone.
    pub rotate: bool,
}

impl Default for ColdStartOptions {
    fn default() -> Self {
        Self { max_iters: 20, weighting: Weighting::PerUser, rotate: true }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ColdStartBatch {
    /// Codes, r×n_u, entries ±1.
    pub codes: DMatrix<f64>,
    /// View weights, M×n_u; every column lies on the simplex. Under batch
    /// weighting all columns are equal.
    pub mu: DMatrix<f64>,
    /// Users whose fused projection was exactly zero; their code is +1ʳ.
    pub zero_projection: Vec<bool>,
    pub iterations: usize,
    pub converged: bool,
}

impl ColdStartBatch {
    pub fn n_users(&self) -> usize {
        self.codes.ncols()
    }
}

/// `Σ_m ‖B − P_m‖_F` over the selected columns, the objective whose square
/// is the self-weighted objective at its optimal weights.
pub fn self_weighted_objective(codes: &DMatrix<f64>, projections: &[DMatrix<f64>], weighting: Weighting) -> f64 {
    match weighting {
        Weighting::Batch => {
            let s: f64 = projections.iter().map(|p| (codes - p).norm()).sum();
            s * s
        }
        Weighting::PerUser => (0..codes.ncols())
            .map(|u| {
                let s: f64 = projections.iter().map(|p| (codes.column(u) - p.column(u)).norm()).sum();
                s * s
            })
            .sum(),
    }
}

fn fuse(projections: &[DMatrix<f64>], mu: &DMatrix<f64>) -> DMatrix<f64> {
    let (r, n) = projections[0].shape();
    let mut fused = DMatrix::zeros(r, n);
    for (m, p) in projections.iter().enumerate() {
        for u in 0..n {
            let w = 1.0 / mu[(m, u)].max(RESIDUAL_FLOOR);
            fused.column_mut(u).axpy(w, &p.column(u), 1.0);
        }
    }
    fused
}

fn weights(codes: &DMatrix<f64>, projections: &[DMatrix<f64>], weighting: Weighting) -> DMatrix<f64> {
    let n = codes.ncols();
    let views = projections.len();
    match weighting {
        Weighting::Batch => {
            let h: Vec<f64> = projections.iter().map(|p| (codes - p).norm().max(RESIDUAL_FLOOR)).collect();
            let mu = weights_from_residuals(&h);
            DMatrix::from_fn(views, n, |m, _| mu[m])
        }
        Weighting::PerUser => {
            let mut out = DMatrix::zeros(views, n);
            for u in 0..n {
                let h: Vec<f64> = projections.iter().map(|p| (codes.column(u) - p.column(u)).norm().max(RESIDUAL_FLOOR)).collect();
                out.set_column(u, &weights_from_residuals(&h));
            }
            out
        }
    }
}

/// Alternates weights and codes on precomputed per-view projections
/// `P_m` (r×n_u each) until the codes stop changing.
pub fn alternate_codes(projections: &[DMatrix<f64>], opts: &ColdStartOptions) -> Result<ColdStartBatch> {
    let first = projections.first().ok_or_else(|| ColdStartError::Dimension("no views".into()))?;
    if projections.iter().any(|p| p.shape() != first.shape()) {
        return Err(ColdStartError::Dimension("view projections differ in shape".into()));
    }
    let n = first.ncols();
    let views = projections.len();
    let mut mu = DMatrix::from_element(views, n, 1.0 / views as f64);
    let fused = fuse(projections, &mu);
    let zero_projection: Vec<bool> = (0..n).map(|u| fused.column(u).iter().all(|&v| v == 0.0)).collect();
    let mut codes = sign(&fused);
    let mut iterations = 0;
    let mut converged = false;
    while iterations < opts.max_iters {
        iterations += 1;
        mu = weights(&codes, projections, opts.weighting);
        let next = sign(&fuse(projections, &mu));
        if next == codes {
            converged = true;
            break;
        }
        codes = next;
    }
    for (u, &z) in zero_projection.iter().enumerate() {
        if z {
            log::warn!("cold-start user {u}: all views project to zero, code defaults to all +1");
        }
    }
    Ok(ColdStartBatch { codes, mu, zero_projection, iterations, converged })
}

/// Per-view projections of encoded user columns.
pub fn project_views(model: &TrainedModel, x_u: &[DMatrix<f64>], rotate: bool) -> Result<Vec<DMatrix<f64>>> {
    if x_u.len() != model.w.len() {
        return Err(ColdStartError::Dimension(format!("{} views supplied, model has {}", x_u.len(), model.w.len())));
    }
    let n = x_u.first().map_or(0, DMatrix::ncols);
    let mut out = Vec::with_capacity(x_u.len());
    for (m, (w, x)) in model.w.iter().zip(x_u).enumerate() {
        if x.nrows() != w.ncols() || x.ncols() != n {
            return Err(ColdStartError::Dimension(format!("view {m} is {}x{}, expected {}x{n}", x.nrows(), x.ncols(), w.ncols())));
        }
        out.push(if rotate { &model.r * (w * x) } else { w * x });
    }
    Ok(out)
}

/// Codes for a batch of users given their encoded views (all-zero blocks
/// for missing views).
pub fn generate_user_codes(model: &TrainedModel, x_u: &[DMatrix<f64>], opts: &ColdStartOptions) -> Result<ColdStartBatch> {
    alternate_codes(&project_views(model, x_u, opts.rotate)?, opts)
}

/// Encodes raw user records with the model's stored encoders.
pub fn encode_users(model: &TrainedModel, records: &[DemoRecord], histories: Option<&[Vec<u32>]>) -> Result<Vec<DMatrix<f64>>> {
    let known: Vec<&str> = model
        .encoders
        .views
        .iter()
        .filter_map(|v| match v {
            ViewEncoder::Demographic(e) => Some(e.attributes.iter().map(|a| a.spec.name.as_str())),
            _ => None,
        })
        .flatten()
        .collect();
    for rec in records {
        let unknown: Vec<&str> = rec.keys().map(String::as_str).filter(|k| !known.contains(k)).collect();
        if !unknown.is_empty() {
            return Err(ColdStartError::UnknownAttributes(unknown.join(", ")));
        }
    }
    if let Some(hs) = histories {
        if hs.len() != records.len() {
            return Err(ColdStartError::Dimension(format!("{} histories for {} users", hs.len(), records.len())));
        }
        let items = model.n_items();
        if let Some(&item) = hs.iter().flatten().find(|&&i| i as usize >= items) {
            return Err(ColdStartError::ItemOutOfRange { item, items });
        }
    }
    Ok(encode_view_columns(&model.encoders, records, histories))
}

/// Code for one arriving user from demographics and, optionally, a rating
/// history of item indices.
pub fn encode_new_user(
    model: &TrainedModel,
    record: &DemoRecord,
    history: Option<&[u32]>,
    opts: &ColdStartOptions,
) -> Result<ColdStartBatch> {
    if record.is_empty() {
        return Err(ColdStartError::EmptyRecord);
    }
    let histories = history.map(|h| vec![h.to_vec()]);
    let x = encode_users(model, std::slice::from_ref(record), histories.as_deref())?;
    generate_user_codes(model, &x, opts)
}

/// Weight column of user `u`.
pub fn user_weights(batch: &ColdStartBatch, u: usize) -> DVector<f64> {
    batch.mu.column(u).into_owned()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{gaussian_matrix, stream};
    use proptest::prelude::*;

    fn projections(seed: u64, r: usize, n: usize, views: usize) -> Vec<DMatrix<f64>> {
        let mut rng = stream(seed, "coldstart-test");
        (0..views).map(|_| gaussian_matrix(&mut rng, r, n)).collect()
    }

    #[test]
    fn single_view_is_one_sign_pass() {
        let p = projections(1, 6, 9, 1);
        let out = alternate_codes(&p, &ColdStartOptions::default()).unwrap();
        assert_eq!(out.codes, sign(&p[0]));
        assert_eq!(out.iterations, 1);
        assert!(out.converged);
        assert!(out.mu.iter().all(|&m| m == 1.0));
    }

    #[test]
    fn duplicate_columns_give_identical_codes() {
        let mut p = projections(2, 8, 5, 2);
        for v in &mut p {
            let c = v.column(1).into_owned();
            v.set_column(3, &c);
        }
        for weighting in [Weighting::PerUser, Weighting::Batch] {
            let out = alternate_codes(&p, &ColdStartOptions { weighting, ..Default::default() }).unwrap();
            assert_eq!(out.codes.column(1), out.codes.column(3));
        }
    }

    #[test]
    fn zero_projection_defaults_to_plus_one() {
        let mut p = projections(3, 4, 3, 2);
        for v in &mut p {
            v.column_mut(2).fill(0.0);
        }
        let out = alternate_codes(&p, &ColdStartOptions::default()).unwrap();
        assert_eq!(out.zero_projection, vec![false, false, true]);
        assert!(out.codes.column(2).iter().all(|&v| v == 1.0));
    }

    #[test]
    fn zero_view_is_down_weighted() {
        let mut p = projections(4, 8, 4, 2);
        p[1].fill(0.0);
        let out = alternate_codes(&p, &ColdStartOptions::default()).unwrap();
        assert_eq!(out.codes, sign(&p[0]));
        for u in 0..4 {
            assert!(out.mu[(1, u)] > out.mu[(0, u)]);
        }
    }

    #[test]
    fn per_user_weighting_is_column_independent() {
        let p = projections(5, 8, 10, 3);
        let batch = alternate_codes(&p, &ColdStartOptions::default()).unwrap();
        for u in 0..10 {
            let single: Vec<DMatrix<f64>> = p.iter().map(|v| v.columns(u, 1).into_owned()).collect();
            let one = alternate_codes(&single, &ColdStartOptions::default()).unwrap();
            assert_eq!(one.codes.column(0), batch.codes.column(u));
            assert_eq!(one.mu.column(0), batch.mu.column(u));
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn objective_never_increases_and_weights_on_simplex(seed in 0u64..100_000, views in 1usize..4, batch in any::<bool>()) {
            let weighting = if batch { Weighting::Batch } else { Weighting::PerUser };
            let p = projections(seed, 6, 5, views);
            let n = 5;
            let mut mu = DMatrix::from_element(views, n, 1.0 / views as f64);
            let mut codes = sign(&fuse(&p, &mu));
            let mut last = self_weighted_objective(&codes, &p, weighting);
            for _ in 0..20 {
                mu = weights(&codes, &p, weighting);
                for u in 0..n {
                    prop_assert!((mu.column(u).sum() - 1.0).abs() < 1e-10);
                    prop_assert!(mu.column(u).iter().all(|&m| m >= 0.0));
                }
                codes = sign(&fuse(&p, &mu));
                prop_assert!(codes.iter().all(|&v| v == 1.0 || v == -1.0));
                let value = self_weighted_objective(&codes, &p, weighting);
                prop_assert!(value <= last + 1e-9 * last.max(1.0));
                last = value;
            }
            let out = alternate_codes(&p, &ColdStartOptions { weighting, ..Default::default() }).unwrap();
            prop_assert!(out.converged);
            // partial optimum: codes are optimal for their weights and vice versa
            prop_assert_eq!(&weights(&out.codes, &p, weighting), &out.mu);
            prop_assert_eq!(sign(&fuse(&p, &out.mu)), out.codes);
        }
    }
}
