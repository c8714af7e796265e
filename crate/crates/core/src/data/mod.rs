//! Rating data, user demographics and the per-user content-feature views.

mod bookcrossing;
mod cache;
mod encode;
mod movielens;
mod split;
mod text;

pub use bookcrossing::{load_bookcrossing, load_bookcrossing_with, BookCrossingOptions, NAME as BOOKCROSSING};
pub use cache::{read_cache, source_digest, write_cache, CachedDataset, CACHE_FORMAT_VERSION};
pub use encode::{
    bag_of_words, build_views, encode_demographics, encode_interaction_preference, encode_view_columns, AttributeVocab, DemographicEncoder,
    EncoderSet, FeatureOptions, PreferenceEncoder, ViewEncoder,
};
pub use movielens::{load_movielens, NAME as MOVIELENS};
pub use split::{split_cold_start, ColdStartSplit, SplitSpec};

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numerics::{CsrMatrix, NumericsError};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}:{line}: {msg}")]
    Parse { path: String, line: usize, msg: String },
    #[error("{path}:{line}: rating references unknown {kind} `{id}`")]
    Reference { path: String, line: usize, kind: &'static str, id: String },
    #[error("{0}: no ratings")]
    Empty(String),
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("dataset cache: {0}")]
    Cache(String),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

pub type Result<T> = std::result::Result<T, DataError>;

/// One observed (user, item) interaction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rating {
    pub user: u32,
    pub item: u32,
    pub value: f64,
    /// Implicit feedback (BookCrossing rating 0), stored at the scale midpoint.
    pub implicit: bool,
}

/// Sparse n×m rating matrix with at most one entry per (user, item).
#[derive(Debug, Clone, PartialEq)]
pub struct RatingMatrix {
    n_users: usize,
    n_items: usize,
    entries: Vec<Rating>,
    scale: (f64, f64),
}

impl RatingMatrix {
    /// Sorts by (user, item) and keeps the last occurrence of duplicates.
    pub fn new(n_users: usize, n_items: usize, entries: Vec<Rating>, scale: (f64, f64)) -> Result<Self> {
        if scale.0.is_nan() || scale.1.is_nan() || scale.0 > scale.1 {
            return Err(DataError::Parameter(format!("invalid rating scale {scale:?}")));
        }
        for r in &entries {
            if r.user as usize >= n_users || r.item as usize >= n_items {
                return Err(DataError::Parameter(format!("rating ({}, {}) outside {n_users}x{n_items}", r.user, r.item)));
            }
            if !(scale.0..=scale.1).contains(&r.value) {
                return Err(DataError::Parameter(format!("rating {} for ({}, {}) outside scale {scale:?}", r.value, r.user, r.item)));
            }
        }
        let mut entries = entries;
        entries.sort_by_key(|r| (r.user, r.item));
        let mut deduped: Vec<Rating> = Vec::with_capacity(entries.len());
        for r in entries {
            match deduped.last_mut() {
                Some(last) if last.user == r.user && last.item == r.item => *last = r,
                _ => deduped.push(r),
            }
        }
        Ok(Self { n_users, n_items, entries: deduped, scale })
    }

    pub fn n_users(&self) -> usize {
        self.n_users
    }

    pub fn n_items(&self) -> usize {
        self.n_items
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.n_users, self.n_items)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[Rating] {
        &self.entries
    }

    pub fn scale(&self) -> (f64, f64) {
        self.scale
    }

    /// Fraction of unobserved cells.
    pub fn sparsity(&self) -> f64 {
        let cells = self.n_users as f64 * self.n_items as f64;
        if cells == 0.0 {
            return 1.0;
        }
        1.0 - self.entries.len() as f64 / cells
    }

    /// Builds the sparse matrix S. With `normalize`, ratings are mapped
    /// affinely from the scale onto [−1, 1].
    pub fn to_csr(&self, normalize: bool) -> CsrMatrix {
        let (lo, hi) = self.scale;
        let span = hi - lo;
        let map = |v: f64| {
            if normalize && span > 0.0 {
                2.0 * (v - lo) / span - 1.0
            } else {
                v
            }
        };
        CsrMatrix::from_triplets(self.n_users, self.n_items, self.entries.iter().map(|r| (r.user as usize, r.item as usize, map(r.value))))
            .expect("validated on construction")
    }

    /// Rated item indices per user, ascending.
    pub fn items_by_user(&self) -> Vec<Vec<u32>> {
        let mut out = vec![Vec::new(); self.n_users];
        for r in &self.entries {
            out[r.user as usize].push(r.item);
        }
        out
    }

    pub fn item_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_items];
        for r in &self.entries {
            counts[r.item as usize] += 1;
        }
        counts
    }

    /// Dense copy (n×m). Only for small fixtures and reference checks.
    pub fn to_dense(&self) -> DMatrix<f64> {
        self.to_csr(false).to_dense()
    }
}

/// How a raw demographic attribute becomes a category.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AttributeKind {
    /// The trimmed raw value is the category.
    Categorical,
    /// Numeric age bucketed into decades 0–9, …, 80–89, 90+; values above
    /// 100 or non-numeric are missing.
    AgeDecade,
    /// Last comma-separated field of a location, lower-cased; rare tokens
    /// collapse into `other`.
    CountryToken,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttributeSpec {
    pub name: String,
    pub kind: AttributeKind,
}

impl AttributeSpec {
    pub fn new(name: &str, kind: AttributeKind) -> Self {
        Self { name: name.to_string(), kind }
    }
}

/// Raw demographic attributes of one user; a missing key is a missing value.
pub type DemoRecord = BTreeMap<String, String>;

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub user_ids: Vec<String>,
    pub item_ids: Vec<String>,
    pub ratings: RatingMatrix,
    pub demo_schema: Vec<AttributeSpec>,
    pub user_demo: Vec<DemoRecord>,
    /// Side-information labels per item (genres, title words, ...).
    pub item_side: Vec<Vec<String>>,
}

impl Dataset {
    pub fn n_users(&self) -> usize {
        self.user_ids.len()
    }

    pub fn n_items(&self) -> usize {
        self.item_ids.len()
    }

    pub fn validate(&self) -> Result<()> {
        let (n, m) = self.ratings.shape();
        if n != self.user_ids.len() || m != self.item_ids.len() {
            return Err(DataError::Parameter(format!(
                "rating matrix is {n}x{m} but dataset has {} users and {} items",
                self.user_ids.len(),
                self.item_ids.len()
            )));
        }
        if self.user_demo.len() != n || self.item_side.len() != m {
            return Err(DataError::Parameter("side-information length mismatch".into()));
        }
        Ok(())
    }

    pub fn stats(&self) -> DatasetStats {
        DatasetStats {
            name: self.name.clone(),
            users: self.n_users(),
            items: self.n_items(),
            ratings: self.ratings.len(),
            sparsity: self.ratings.sparsity(),
        }
    }

    /// Keeps the listed users (in the given order) with all their ratings;
    /// the item index space is unchanged.
    pub fn select_users(&self, users: &[usize]) -> Dataset {
        let mut position = vec![u32::MAX; self.n_users()];
        for (new, &old) in users.iter().enumerate() {
            position[old] = new as u32;
        }
        let entries = self
            .ratings
            .entries()
            .iter()
            .filter(|r| position[r.user as usize] != u32::MAX)
            .map(|r| Rating { user: position[r.user as usize], ..*r })
            .collect();
        Dataset {
            name: self.name.clone(),
            user_ids: users.iter().map(|&u| self.user_ids[u].clone()).collect(),
            item_ids: self.item_ids.clone(),
            ratings: RatingMatrix::new(users.len(), self.n_items(), entries, self.ratings.scale()).expect("subset of a valid matrix"),
            demo_schema: self.demo_schema.clone(),
            user_demo: users.iter().map(|&u| self.user_demo[u].clone()).collect(),
            item_side: self.item_side.clone(),
        }
    }
}

/// Summary row printed by `prepare`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub name: String,
    pub users: usize,
    pub items: usize,
    pub ratings: usize,
    pub sparsity: f64,
}

/// Which encoder produced a feature view.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EncoderTag {
    OneHot,
    BagOfWordsPca,
    Raw,
}

/// One content view `X` of shape d×n (features × users).
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureBlock {
    pub view_index: usize,
    pub data: DMatrix<f64>,
    pub encoder: EncoderTag,
}

impl FeatureBlock {
    pub fn new(view_index: usize, data: DMatrix<f64>, encoder: EncoderTag) -> Self {
        Self { view_index, data, encoder }
    }

    pub fn dim(&self) -> usize {
        self.data.nrows()
    }

    pub fn n_users(&self) -> usize {
        self.data.ncols()
    }
}

pub(crate) fn normalize_columns(m: &mut DMatrix<f64>) {
    for mut col in m.column_iter_mut() {
        let norm = col.norm();
        if norm > 0.0 {
            col /= norm;
        }
    }
}
