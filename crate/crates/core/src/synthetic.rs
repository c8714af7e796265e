//! Synthetic instances: a planted-code problem with known answer, and
//! MovieLens-sized random ratings for timing.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::numerics::{orthogonal_procrustes, CsrMatrix};
use crate::rng::{gaussian_matrix, stream};
use crate::solver::sign;

#[derive(Debug, Clone, PartialEq)]
pub struct PlantedSpec {
    pub n_users: usize,
    pub n_items: usize,
    pub bits: usize,
    pub view_dims: Vec<usize>,
    /// Standard deviation of the additive view noise.
    pub noise: f64,
    pub seed: u64,
}

impl Default for PlantedSpec {
    fn default() -> Self {
        Self { n_users: 200, n_items: 120, bits: 16, view_dims: vec![24, 12], noise: 0.1, seed: 0 }
    }
}

/// `S = B*ᵀD*` from random ±1 codes; each view is `A_m B* + noise`.
#[derive(Debug, Clone)]
pub struct PlantedInstance {
    pub user_codes: DMatrix<f64>,
    pub item_codes: DMatrix<f64>,
    /// Dense n×m inner products, stored sparse with every entry present.
    pub ratings: CsrMatrix,
    pub views: Vec<DMatrix<f64>>,
}

pub fn planted_instance(spec: &PlantedSpec) -> PlantedInstance {
    let mut rng = stream(spec.seed, "planted");
    let user_codes = sign(&gaussian_matrix(&mut rng, spec.bits, spec.n_users));
    let item_codes = sign(&gaussian_matrix(&mut rng, spec.bits, spec.n_items));
    let s = user_codes.transpose() * &item_codes;
    let ratings = CsrMatrix::from_triplets(
        spec.n_users,
        spec.n_items,
        (0..spec.n_users).flat_map(|u| (0..spec.n_items).map(move |i| (u, i))).map(|(u, i)| (u, i, s[(u, i)])),
    )
    .expect("finite in-range entries");
    let views = spec
        .view_dims
        .iter()
        .map(|&d| {
            let a = gaussian_matrix(&mut rng, d, spec.bits);
            &a * &user_codes + gaussian_matrix(&mut rng, d, spec.n_users) * spec.noise
        })
        .collect();
    PlantedInstance { user_codes, item_codes, ratings, views }
}

/// Mean per-user `|cos|` between `learned` codes rotated onto `planted` by
/// the orthogonal Procrustes fit of their cross-covariance, and the planted
/// codes.
pub fn aligned_correlation(learned: &DMatrix<f64>, planted: &DMatrix<f64>) -> f64 {
    let q = orthogonal_procrustes(&(planted * learned.transpose())).expect("finite codes");
    let aligned = q * learned;
    let n = planted.ncols();
    (0..n)
        .map(|u| {
            let (a, p) = (aligned.column(u), planted.column(u));
            let denom = a.norm() * p.norm();
            if denom > 0.0 {
                (a.dot(&p) / denom).abs()
            } else {
                0.0
            }
        })
        .sum::<f64>()
        / n as f64
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticRatingsSpec {
    pub n_users: usize,
    pub n_items: usize,
    /// Target number of ratings.
    pub n_ratings: usize,
    pub view_dims: Vec<usize>,
    pub seed: u64,
}

impl SyntheticRatingsSpec {
    /// MovieLens-1M shape: 6040 users, 3952 items, ~1M ratings, a 30-dim
    /// demographic view and a 128-dim preference view.
    pub fn movielens_sized(seed: u64) -> Self {
        Self { n_users: 6040, n_items: 3952, n_ratings: 1_000_209, view_dims: vec![30, 128], seed }
    }
}

/// Random 1–5 ratings from a rank-8 latent model, with Zipf-like item
/// popularity and per-user activity proportional to a log-normal draw.
/// Views are noisy linear images of the user factors with unit columns.
pub fn synthetic_ratings(spec: &SyntheticRatingsSpec) -> (CsrMatrix, Vec<DMatrix<f64>>) {
    const LATENT: usize = 8;
    let mut rng = stream(spec.seed, "synthetic-ratings");
    let (n, m) = (spec.n_users, spec.n_items);
    let users = gaussian_matrix(&mut rng, LATENT, n);
    let items = gaussian_matrix(&mut rng, LATENT, m);

    let activity_dist = Normal::<f64>::new(0.0, 0.8).expect("valid");
    let activity: Vec<f64> = (0..n).map(|_| activity_dist.sample(&mut rng).exp()).collect();
    let total: f64 = activity.iter().sum();
    let popularity: Vec<f64> = (0..m).map(|i| 1.0 / (i as f64 + 10.0)).collect();
    let mut cumulative = Vec::with_capacity(m);
    let mut acc = 0.0;
    for p in &popularity {
        acc += p;
        cumulative.push(acc);
    }

    let noise = Normal::<f64>::new(0.0, 0.5).expect("valid");
    let mut triplets = Vec::with_capacity(spec.n_ratings + n);
    let mut seen = vec![u32::MAX; m];
    for (u, a) in activity.iter().enumerate() {
        let count = ((a / total * spec.n_ratings as f64).round() as usize).clamp(1, m);
        let mut taken = 0;
        while taken < count {
            let x = rng.random::<f64>() * acc;
            let i = cumulative.partition_point(|&c| c < x).min(m - 1);
            if seen[i] == u as u32 {
                continue;
            }
            seen[i] = u as u32;
            taken += 1;
            let score = 3.5 + users.column(u).dot(&items.column(i)) / (LATENT as f64).sqrt() + noise.sample(&mut rng);
            triplets.push((u, i, score.round().clamp(1.0, 5.0)));
        }
    }
    let s = CsrMatrix::from_triplets(n, m, triplets).expect("valid entries");
    let views = spec
        .view_dims
        .iter()
        .map(|&d| {
            let mut x = gaussian_matrix(&mut rng, d, LATENT) * &users + gaussian_matrix(&mut rng, d, n) * 0.5;
            for mut c in x.column_iter_mut() {
                let norm = c.norm();
                if norm > 0.0 {
                    c /= norm;
                }
            }
            x
        })
        .collect();
    (s, views)
}
