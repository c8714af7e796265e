use std::time::Instant;

use nalgebra::DMatrix;
use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use crate::numerics::{truncated_svd_with, CsrMatrix, SvdOptions, TruncatedSvd};
use crate::rng;
use crate::solver::{Hyperparams, Result, Trainer};

/// Per-iteration training time of one configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRecord {
    pub bits: usize,
    pub train_fraction: f64,
    pub n_users: usize,
    pub n_items: usize,
    pub timed_iterations: usize,
    pub seconds_per_iteration: f64,
    /// Bytes held by the dense training state.
    pub peak_rss_estimate: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BenchSpec {
    pub bits: Vec<usize>,
    pub fractions: Vec<f64>,
    /// Code length used for the fraction sweep.
    pub fraction_bits: usize,
    pub warmup: usize,
    pub timed: usize,
    /// Convergence tolerance of the untimed truncated SVD.
    pub svd_tol: f64,
}

impl Default for BenchSpec {
    fn default() -> Self {
        Self {
            bits: vec![8, 16, 32, 64, 128],
            fractions: vec![0.25, 0.5, 0.75, 1.0],
            fraction_bits: 32,
            warmup: 2,
            timed: 5,
            svd_tol: 1e-4,
        }
    }
}

/// Keeps a seeded random subset of `round(fraction · n)` users (in index
/// order) from the rating matrix and every view.
pub fn subsample_users(s: &CsrMatrix, views: &[DMatrix<f64>], fraction: f64, seed: u64) -> (CsrMatrix, Vec<DMatrix<f64>>) {
    let (n, m) = s.shape();
    let keep = ((fraction * n as f64).round() as usize).clamp(1, n);
    let mut users = sample(&mut rng::stream(seed, rng::SPLIT), n, keep).into_vec();
    users.sort_unstable();
    let mut position = vec![usize::MAX; n];
    for (p, &u) in users.iter().enumerate() {
        position[u] = p;
    }
    let sub = CsrMatrix::from_triplets(keep, m, s.iter().filter(|t| position[t.0] != usize::MAX).map(|(u, i, v)| (position[u], i, v)))
        .expect("rows of a valid matrix");
    let sub_views = views.iter().map(|x| x.select_columns(&users)).collect();
    (sub, sub_views)
}

fn state_bytes(n: usize, m: usize, r: usize, o: usize, dims: &[usize]) -> u64 {
    let floats = n * o + m * o + o      // SVD factors
        + 3 * r * n                     // H, B and one r×n temporary
        + 2 * r * m                     // D and the item-code argument
        + 4 * r * r
        + dims.iter().map(|d| d * n + 2 * r * d + d * d).sum::<usize>();
    (floats * 8) as u64
}

fn bench_svd(s: &CsrMatrix, hyper: &Hyperparams, spec: &BenchSpec) -> Result<TruncatedSvd> {
    let (n, m) = s.shape();
    let opts = SvdOptions { seed: hyper.seed, tol: spec.svd_tol, ..SvdOptions::default() };
    Ok(truncated_svd_with(s, hyper.svd_rank(n, m), &opts)?)
}

fn time_config(svd: TruncatedSvd, views: &[DMatrix<f64>], hyper: &Hyperparams, spec: &BenchSpec, fraction: f64) -> Result<BenchRecord> {
    let mut trainer = Trainer::from_svd(svd, views, hyper)?;
    for _ in 0..spec.warmup {
        trainer.step()?;
    }
    let start = Instant::now();
    for _ in 0..spec.timed {
        trainer.step()?;
    }
    let elapsed = start.elapsed().as_secs_f64();
    let (n, m) = trainer.state.svd.source_shape;
    let dims: Vec<usize> = views.iter().map(DMatrix::nrows).collect();
    Ok(BenchRecord {
        bits: hyper.bits,
        train_fraction: fraction,
        n_users: n,
        n_items: m,
        timed_iterations: spec.timed,
        seconds_per_iteration: elapsed / spec.timed.max(1) as f64,
        peak_rss_estimate: state_bytes(n, m, hyper.bits, hyper.svd_rank(n, m), &dims),
    })
}

/// Code-length sweep on the full data, then the data-fraction sweep at
/// `fraction_bits`. Convergence is ignored so every configuration runs
/// exactly `warmup + timed` iterations. The SVD of each distinct matrix is
/// computed once, outside the timed region.
pub fn bench_scaling(s: &CsrMatrix, views: &[DMatrix<f64>], hyper: &Hyperparams, spec: &BenchSpec) -> Result<Vec<BenchRecord>> {
    hyper.validate()?;
    let base = Hyperparams { tol: f64::MIN_POSITIVE, max_iters: spec.warmup + spec.timed, ..hyper.clone() };
    let full_svd = bench_svd(s, hyper, spec)?;
    let mut out = Vec::new();
    for &bits in &spec.bits {
        let hp = Hyperparams { bits, rank_budget: None, ..base.clone() };
        out.push(time_config(full_svd.clone(), views, &hp, spec, 1.0)?);
    }
    for &fraction in &spec.fractions {
        let hp = Hyperparams { bits: spec.fraction_bits, rank_budget: None, ..base.clone() };
        let (sub, sub_views) = subsample_users(s, views, fraction, hyper.seed);
        let svd = if sub.shape() == s.shape() { full_svd.clone() } else { bench_svd(&sub, hyper, spec)? };
        out.push(time_config(svd, &sub_views, &hp, spec, fraction)?);
    }
    Ok(out)
}

/// Ordinary least-squares line `y ≈ slope·x + intercept`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

/// Least-squares fit over paired samples; needs two distinct x values.
pub fn linear_fit(x: &[f64], y: &[f64]) -> Option<LinearFit> {
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let r_squared = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Some(LinearFit { slope, intercept: my - slope * mx, r_squared })
}

/// Fits over a `bench_scaling` result: time against training users for the
/// fraction sweep, and log time against log r for the code-length sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingSummary {
    pub users_fit: Option<LinearFit>,
    pub log_bits_fit: Option<LinearFit>,
}

pub fn scaling_summary(records: &[BenchRecord], spec: &BenchSpec) -> ScalingSummary {
    let (bits, fractions) = records.split_at(spec.bits.len().min(records.len()));
    let users: Vec<f64> = fractions.iter().map(|r| r.n_users as f64).collect();
    let times: Vec<f64> = fractions.iter().map(|r| r.seconds_per_iteration).collect();
    let log_r: Vec<f64> = bits.iter().map(|r| (r.bits as f64).ln()).collect();
    let log_t: Vec<f64> = bits.iter().map(|r| r.seconds_per_iteration.ln()).collect();
    ScalingSummary { users_fit: linear_fit(&users, &times), log_bits_fit: linear_fit(&log_r, &log_t) }
}
