//! Run configuration: TOML file, command-line overrides and validation.

use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use mfdcf_core::coldstart::ColdStartOptions;
use mfdcf_core::data::{BookCrossingOptions, FeatureOptions, SplitSpec};
use mfdcf_core::eval::{BenchSpec, PositiveRule};
use mfdcf_core::solver::Hyperparams;
use serde::{Deserialize, Serialize};

/// Values swept per hyperparameter when the grid leaves a list unset.
pub const PAPER_GRID: [f64; 7] = [1e-6, 1e-4, 1e-1, 1.0, 10.0, 1e3, 1e6];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DatasetKind {
    Movielens,
    Bookcrossing,
}

impl DatasetKind {
    /// Canonical file names of the ratings, users and items files.
    pub fn file_names(self) -> [&'static str; 3] {
        match self {
            DatasetKind::Movielens => ["ratings.dat", "users.dat", "movies.dat"],
            DatasetKind::Bookcrossing => ["BX-Book-Ratings.csv", "BX-Users.csv", "BX-Books.csv"],
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetConfig {
    /// Detected from the files in `dir` when unset.
    pub kind: Option<DatasetKind>,
    /// Directory holding the canonical dump.
    pub dir: Option<PathBuf>,
    pub ratings: Option<PathBuf>,
    pub users: Option<PathBuf>,
    pub items: Option<PathBuf>,
    pub bookcrossing: BookCrossingOptions,
}

/// Concrete raw files of a dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSource {
    pub kind: DatasetKind,
    pub ratings: PathBuf,
    pub users: PathBuf,
    pub items: PathBuf,
}

impl DatasetSource {
    pub fn paths(&self) -> [&Path; 3] {
        [&self.ratings, &self.users, &self.items]
    }
}

impl DatasetConfig {
    pub fn is_set(&self) -> bool {
        self.dir.is_some() || self.ratings.is_some()
    }

    fn detect(dir: &Path) -> Option<DatasetKind> {
        [DatasetKind::Movielens, DatasetKind::Bookcrossing].into_iter().find(|k| dir.join(k.file_names()[0]).is_file())
    }

    pub fn resolve(&self) -> Result<DatasetSource> {
        let kind = match (self.kind, &self.dir) {
            (Some(k), _) => k,
            (None, Some(dir)) => {
                Self::detect(dir).with_context(|| format!("{}: no ratings.dat or BX-Book-Ratings.csv found", dir.display()))?
            }
            (None, None) => bail!("no dataset configured: pass --dataset <DIR> or set [dataset] in the config file"),
        };
        let names = kind.file_names();
        let pick = |explicit: &Option<PathBuf>, idx: usize| -> Result<PathBuf> {
            match (explicit, &self.dir) {
                (Some(p), _) => Ok(p.clone()),
                (None, Some(dir)) => Ok(dir.join(names[idx])),
                (None, None) => bail!("dataset file `{}` is not configured", names[idx]),
            }
        };
        Ok(DatasetSource { kind, ratings: pick(&self.ratings, 0)?, users: pick(&self.users, 1)?, items: pick(&self.items, 2)? })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub ks: Vec<usize>,
    /// Dataset default when unset.
    pub positive_rule: Option<PositiveRule>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { ks: (1..=10).map(|k| 2 * k).collect(), positive_rule: None }
    }
}

/// Value lists for the α, β, γ sweep; an empty list keeps the configured
/// hyperparameter fixed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridConfig {
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub gamma: Vec<f64>,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self { alpha: PAPER_GRID.to_vec(), beta: Vec::new(), gamma: Vec::new() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub out: PathBuf,
    pub dataset: DatasetConfig,
    pub hyper: Hyperparams,
    pub features: FeatureOptions,
    pub split: SplitSpec,
    pub eval: EvalConfig,
    pub coldstart: ColdStartOptions,
    pub grid: GridConfig,
    pub bench: BenchSpec,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            out: PathBuf::from("mfdcf-out"),
            dataset: DatasetConfig::default(),
            hyper: Hyperparams::default(),
            features: FeatureOptions::default(),
            split: SplitSpec::default(),
            eval: EvalConfig::default(),
            coldstart: ColdStartOptions::default(),
            grid: GridConfig::default(),
            bench: BenchSpec::default(),
        }
    }
}

/// Command-line values that take precedence over the config file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub dataset: Option<PathBuf>,
    pub bits: Option<usize>,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub gamma: Option<f64>,
    pub lambda: Option<f64>,
    pub rank_budget: Option<usize>,
    pub svd_rank: Option<usize>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    /// Defaults, then the file, then `overrides`; validated.
    pub fn load(path: Option<&Path>, overrides: &Overrides) -> Result<Self> {
        let mut cfg = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                Self::from_toml(&text).with_context(|| format!("{}: invalid configuration", p.display()))?
            }
            None => Self::default(),
        };
        cfg.apply(overrides);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(dir) = &o.dataset {
            self.dataset = DatasetConfig { dir: Some(dir.clone()), bookcrossing: self.dataset.bookcrossing.clone(), ..Default::default() };
        }
        let hp = &mut self.hyper;
        if let Some(v) = o.bits {
            hp.bits = v;
        }
        if let Some(v) = o.alpha {
            hp.alpha = v;
        }
        if let Some(v) = o.beta {
            hp.beta = v;
        }
        if let Some(v) = o.gamma {
            hp.gamma = v;
        }
        if let Some(v) = o.lambda {
            hp.lambda = v;
        }
        if let Some(v) = o.rank_budget {
            hp.rank_budget = Some(v);
        }
        if let Some(v) = o.svd_rank {
            hp.svd_rank = Some(v);
        }
        if let Some(v) = o.seed {
            hp.seed = v;
            self.split.seed = v;
        }
        if let Some(v) = &o.out {
            self.out = v.clone();
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.hyper.validate()?;
        ensure!(!self.eval.ks.is_empty() && self.eval.ks.iter().all(|&k| k > 0), "eval.ks must list positive cut-offs");
        ensure!(
            self.split.cold_fraction > 0.0 && self.split.cold_fraction < 1.0,
            "split.cold_fraction = {} must lie in (0, 1)",
            self.split.cold_fraction
        );
        ensure!(self.split.repeats > 0, "split.repeats must be at least 1");
        ensure!(self.features.preference_dim > 0 && self.features.max_vocab > 0, "feature dimensions must be positive");
        ensure!(self.coldstart.max_iters > 0, "coldstart.max_iters must be at least 1");
        for (name, values) in [("alpha", &self.grid.alpha), ("beta", &self.grid.beta), ("gamma", &self.grid.gamma)] {
            ensure!(values.iter().all(|v| v.is_finite() && *v >= 0.0), "grid.{name} values must be finite and non-negative");
        }
        let b = &self.bench;
        ensure!(!b.bits.is_empty() && b.bits.iter().all(|&r| r > 0), "bench.bits must list positive code lengths");
        ensure!(!b.fractions.is_empty() && b.fractions.iter().all(|&f| f > 0.0 && f <= 1.0), "bench.fractions must lie in (0, 1]");
        ensure!(b.fraction_bits > 0 && b.timed > 0, "bench.fraction_bits and bench.timed must be positive");
        ensure!(b.svd_tol.is_finite() && b.svd_tol > 0.0, "bench.svd_tol must be positive");
        Ok(())
    }

    /// JSON echo embedded in every output file.
    pub fn echo(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("configuration serializes")
    }
}
