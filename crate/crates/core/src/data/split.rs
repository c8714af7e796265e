use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use super::{DataError, Dataset, Result};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplitSpec {
    /// Fraction of users held out as cold-start users.
    pub cold_fraction: f64,
    pub seed: u64,
    /// Number of random splits; seeds run `seed..seed + repeats`.
    pub repeats: usize,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self { cold_fraction: 0.2, seed: 0, repeats: 5 }
    }
}

impl SplitSpec {
    pub fn seeds(&self) -> Vec<u64> {
        (0..self.repeats as u64).map(|k| self.seed + k).collect()
    }
}

/// Train/test partition of users. All ratings of a test user are removed
/// from training; their demographics stay available as cold-start input.
#[derive(Debug, Clone, PartialEq)]
pub struct ColdStartSplit {
    pub train: Dataset,
    pub test: Dataset,
    /// Original indices of the train users, in train order.
    pub train_users: Vec<usize>,
    pub test_users: Vec<usize>,
}

pub fn split_cold_start(d: &Dataset, spec: &SplitSpec) -> Result<ColdStartSplit> {
    let n = d.n_users();
    if !(spec.cold_fraction > 0.0 && spec.cold_fraction < 1.0) {
        return Err(DataError::Parameter(format!("cold fraction {} must lie in (0, 1)", spec.cold_fraction)));
    }
    let n_test = (spec.cold_fraction * n as f64).round() as usize;
    if n_test == 0 {
        return Err(DataError::Parameter(format!("cold fraction {} selects no users out of {n}", spec.cold_fraction)));
    }
    if n_test >= n {
        return Err(DataError::Parameter(format!("cold fraction {} leaves no training users", spec.cold_fraction)));
    }
    let mut stream = rng::stream(spec.seed, rng::SPLIT);
    let mut test_users = sample(&mut stream, n, n_test).into_vec();
    test_users.sort_unstable();
    let mut is_test = vec![false; n];
    for &u in &test_users {
        is_test[u] = true;
    }
    let train_users: Vec<usize> = (0..n).filter(|&u| !is_test[u]).collect();
    Ok(ColdStartSplit { train: d.select_users(&train_users), test: d.select_users(&test_users), train_users, test_users })
}
