//! Hamming-space ranking, Accuracy@k against held-out positives, sanity
//! baselines and per-iteration timing.

mod bench;

pub use bench::{bench_scaling, linear_fit, scaling_summary, subsample_users, BenchRecord, BenchSpec, LinearFit, ScalingSummary};

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::coldstart::ColdStartBatch;
use crate::data::{Dataset, Rating, RatingMatrix};
use crate::rng;
use crate::solver::TrainedModel;

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("code lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("k = {k} exceeds the {available} rankable items")]
    KTooLarge { k: usize, available: usize },
    #[error("test set has no positive interactions")]
    EmptyTestSet,
    #[error("{0}")]
    Dimension(String),
}

pub type Result<T> = std::result::Result<T, EvalError>;

/// ±1 codes packed column-wise into 64-bit words; a set bit encodes +1.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PackedCodes {
    bits: usize,
    words: usize,
    data: Vec<u64>,
}

impl PackedCodes {
    /// Packs the columns of an r×n ±1 matrix.
    pub fn from_columns(codes: &DMatrix<f64>) -> Self {
        let bits = codes.nrows();
        let words = bits.div_ceil(64).max(1);
        let mut data = vec![0u64; words * codes.ncols()];
        for (j, col) in codes.column_iter().enumerate() {
            for (i, &v) in col.iter().enumerate() {
                if v > 0.0 {
                    data[j * words + i / 64] |= 1 << (i % 64);
                }
            }
        }
        Self { bits, words, data }
    }

    pub fn from_vector(code: &DVector<f64>) -> Self {
        Self::from_columns(&DMatrix::from_column_slice(code.len(), 1, code.as_slice()))
    }

    pub fn bits(&self) -> usize {
        self.bits
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.words
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    fn code(&self, j: usize) -> &[u64] {
        &self.data[j * self.words..(j + 1) * self.words]
    }

    /// Number of differing bits between code `a` of `self` and code `b` of
    /// `other`.
    pub fn hamming_distance(&self, a: usize, other: &PackedCodes, b: usize) -> u32 {
        self.code(a).iter().zip(other.code(b)).map(|(x, y)| (x ^ y).count_ones()).sum()
    }

    /// `bᵀd = r − 2·hamming`.
    pub fn inner_product(&self, a: usize, other: &PackedCodes, b: usize) -> i64 {
        self.bits as i64 - 2 * i64::from(self.hamming_distance(a, other, b))
    }

    /// Unpacks back to a ±1 matrix.
    pub fn to_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.bits, self.len(), |i, j| if self.code(j)[i / 64] >> (i % 64) & 1 == 1 { 1.0 } else { -1.0 })
    }
}

/// `½ + bᵀd / 2r`.
pub fn hamming_score(b: &DVector<f64>, d: &DVector<f64>) -> Result<f64> {
    if b.len() != d.len() {
        return Err(EvalError::LengthMismatch(b.len(), d.len()));
    }
    let r = b.len();
    let ip = PackedCodes::from_vector(b).inner_product(0, &PackedCodes::from_vector(d), 0);
    Ok(0.5 + ip as f64 / (2.0 * r as f64))
}

/// The `k` items closest in Hamming distance to user code `user` of
/// `users`, skipping `exclude`; ties go to the smaller item index.
pub fn top_k_items(users: &PackedCodes, user: usize, items: &PackedCodes, k: usize, exclude: &[u32]) -> Result<Vec<u32>> {
    if users.bits() != items.bits() {
        return Err(EvalError::LengthMismatch(users.bits(), items.bits()));
    }
    let m = items.len();
    let mut excluded = vec![false; m];
    for &i in exclude {
        if let Some(slot) = excluded.get_mut(i as usize) {
            *slot = true;
        }
    }
    let available = m - excluded.iter().filter(|&&e| e).count();
    if k > available {
        return Err(EvalError::KTooLarge { k, available });
    }
    // counting sort by distance keeps ascending index order inside a bucket
    let mut buckets: Vec<Vec<u32>> = vec![Vec::new(); users.bits() + 1];
    for j in 0..m {
        if !excluded[j] {
            buckets[users.hamming_distance(user, items, j) as usize].push(j as u32);
        }
    }
    Ok(buckets.into_iter().flatten().take(k).collect())
}

/// Which held-out interactions count as the user's favorites.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PositiveRule {
    /// Explicit ratings at or above this value are positive.
    pub min_rating: f64,
    /// Whether implicit-feedback interactions are positive.
    pub implicit_positive: bool,
}

impl PositiveRule {
    pub fn for_dataset(name: &str) -> Self {
        match name {
            crate::data::BOOKCROSSING => Self { min_rating: 7.0, implicit_positive: true },
            _ => Self { min_rating: 4.0, implicit_positive: false },
        }
    }

    pub fn accepts(&self, r: &Rating) -> bool {
        if r.implicit {
            self.implicit_positive
        } else {
            r.value >= self.min_rating
        }
    }
}

/// Positive (user, item) pairs of `test`, grouped by user.
pub fn positives_by_user(test: &RatingMatrix, rule: &PositiveRule) -> Vec<Vec<u32>> {
    let mut out = vec![Vec::new(); test.n_users()];
    for r in test.entries().iter().filter(|r| rule.accepts(r)) {
        out[r.user as usize].push(r.item);
    }
    out
}

/// Hit counts of one split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitReport {
    pub split: u64,
    pub n_test_cases: usize,
    pub hits: BTreeMap<usize, usize>,
    pub accuracy_at_k: BTreeMap<usize, f64>,
}

/// Counts `#Hit@k` for every k: a positive is hit when it appears in the
/// user's top-k list. `rank(u, k)` returns user u's top-k list.
pub fn evaluate_ranker(
    split: u64,
    test: &RatingMatrix,
    rule: &PositiveRule,
    ks: &[usize],
    mut rank: impl FnMut(usize, usize) -> Result<Vec<u32>>,
) -> Result<SplitReport> {
    let positives = positives_by_user(test, rule);
    let n_test_cases: usize = positives.iter().map(Vec::len).sum();
    if n_test_cases == 0 {
        return Err(EvalError::EmptyTestSet);
    }
    let k_max = ks.iter().copied().max().unwrap_or(0);
    let mut hits: BTreeMap<usize, usize> = ks.iter().map(|&k| (k, 0)).collect();
    for (u, items) in positives.iter().enumerate() {
        if items.is_empty() {
            continue;
        }
        let list = rank(u, k_max)?;
        let mut position = vec![usize::MAX; test.n_items()];
        for (p, &i) in list.iter().enumerate() {
            position[i as usize] = p;
        }
        for &i in items {
            let p = position[i as usize];
            for (&k, h) in hits.iter_mut() {
                if p < k {
                    *h += 1;
                }
            }
        }
    }
    let accuracy_at_k = hits.iter().map(|(&k, &h)| (k, h as f64 / n_test_cases as f64)).collect();
    Ok(SplitReport { split, n_test_cases, hits, accuracy_at_k })
}

/// Accuracy@k of cold-start codes against the model's item codes. Cold
/// users have no training items, so nothing is excluded.
pub fn accuracy_at_k(
    model: &TrainedModel,
    cold: &ColdStartBatch,
    test: &Dataset,
    ks: &[usize],
    rule: &PositiveRule,
    split: u64,
) -> Result<SplitReport> {
    if cold.n_users() != test.n_users() {
        return Err(EvalError::Dimension(format!("{} codes for {} test users", cold.n_users(), test.n_users())));
    }
    if test.n_items() != model.n_items() {
        return Err(EvalError::Dimension(format!("test has {} items, model {}", test.n_items(), model.n_items())));
    }
    let users = PackedCodes::from_columns(&cold.codes);
    let items = PackedCodes::from_columns(&model.d);
    evaluate_ranker(split, &test.ratings, rule, ks, |u, k| top_k_items(&users, u, &items, k, &[]))
}

/// Seeded uniformly random ranking, independent per user.
pub fn random_ranking(seed: u64, user: usize, n_items: usize, k: usize, exclude: &[u32]) -> Result<Vec<u32>> {
    let mut pool: Vec<u32> = (0..n_items as u32).filter(|i| !exclude.contains(i)).collect();
    if k > pool.len() {
        return Err(EvalError::KTooLarge { k, available: pool.len() });
    }
    let mut stream = rng::indexed_stream(seed, rng::BASELINE, user as u64);
    let (chosen, _) = pool.partial_shuffle(&mut stream, k);
    Ok(chosen.to_vec())
}

/// Items by descending training interaction count, ties by index.
pub fn popularity_order(train: &RatingMatrix) -> Vec<u32> {
    let counts = train.item_counts();
    let mut order: Vec<u32> = (0..counts.len() as u32).collect();
    order.sort_by(|&a, &b| counts[b as usize].cmp(&counts[a as usize]).then(a.cmp(&b)));
    order
}

pub fn popularity_ranking(order: &[u32], k: usize, exclude: &[u32]) -> Result<Vec<u32>> {
    let list: Vec<u32> = order.iter().copied().filter(|i| !exclude.contains(i)).take(k).collect();
    if list.len() < k {
        return Err(EvalError::KTooLarge { k, available: list.len() });
    }
    Ok(list)
}

/// Accuracy@k of one method pooled over splits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub method: String,
    pub positive_rule: PositiveRule,
    /// `|D_test|` summed over splits.
    pub n_test_cases: usize,
    /// `#Hit@k` summed over splits.
    pub hits: BTreeMap<usize, usize>,
    /// Pooled `hits / n_test_cases`.
    pub accuracy_at_k: BTreeMap<usize, f64>,
    /// Arithmetic mean of the per-split accuracies.
    pub mean_accuracy_at_k: BTreeMap<usize, f64>,
    pub per_split: Vec<SplitReport>,
    pub config_echo: serde_json::Value,
}

impl EvalReport {
    pub fn from_splits(method: &str, rule: &PositiveRule, per_split: Vec<SplitReport>, config_echo: serde_json::Value) -> Self {
        let n_test_cases: usize = per_split.iter().map(|s| s.n_test_cases).sum();
        let mut hits: BTreeMap<usize, usize> = BTreeMap::new();
        let mut sums: BTreeMap<usize, f64> = BTreeMap::new();
        for s in &per_split {
            for (&k, &h) in &s.hits {
                *hits.entry(k).or_default() += h;
            }
            for (&k, &a) in &s.accuracy_at_k {
                *sums.entry(k).or_default() += a;
            }
        }
        let accuracy_at_k = hits.iter().map(|(&k, &h)| (k, h as f64 / n_test_cases.max(1) as f64)).collect();
        let mean_accuracy_at_k = sums.into_iter().map(|(k, s)| (k, s / per_split.len() as f64)).collect();
        Self {
            method: method.to_string(),
            positive_rule: rule.clone(),
            n_test_cases,
            hits,
            accuracy_at_k,
            mean_accuracy_at_k,
            per_split,
            config_echo,
        }
    }

    /// Flat `(k, accuracy, split, method)` rows: one per split and k, then
    /// the mean rows with split `mean`.
    pub fn csv_rows(&self) -> Vec<(usize, f64, String, String)> {
        let mut rows = Vec::new();
        for s in &self.per_split {
            for (&k, &a) in &s.accuracy_at_k {
                rows.push((k, a, s.split.to_string(), self.method.clone()));
            }
        }
        for (&k, &a) in &self.mean_accuracy_at_k {
            rows.push((k, a, "mean".to_string(), self.method.clone()));
        }
        rows
    }
}
