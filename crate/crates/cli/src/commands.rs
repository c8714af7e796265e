//! Subcommand implementations. Every output file embeds the configuration
//! echo and the output format version.

use std::collections::{BTreeMap, HashSet};
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, ensure, Context, Result};
use mfdcf_core::coldstart::{encode_users, generate_user_codes, ColdStartBatch};
use mfdcf_core::data::{
    build_views, load_bookcrossing_with, load_movielens, read_cache, source_digest, split_cold_start, write_cache, CachedDataset,
    ColdStartSplit, Dataset, DatasetStats, DemoRecord, EncoderSet, FeatureBlock, SplitSpec,
};
use mfdcf_core::eval::{
    accuracy_at_k, bench_scaling, evaluate_ranker, popularity_order, popularity_ranking, random_ranking, scaling_summary, BenchRecord,
    EvalReport, PositiveRule, ScalingSummary, SplitReport,
};
use mfdcf_core::solver::{self, read_model, write_model, Hyperparams, IterationRecord, TrainedModel};
use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::config::{DatasetKind, DatasetSource, RunConfig};
use crate::output::{write_atomic, write_csv, write_json, OUTPUT_FORMAT_VERSION};

pub fn cache_path(cfg: &RunConfig) -> PathBuf {
    cfg.out.join("dataset.bin")
}

/// Model trained on the train users of one split, or on all users.
pub fn model_path(cfg: &RunConfig, split: Option<u64>) -> PathBuf {
    match split {
        Some(seed) => cfg.out.join("models").join(format!("split-{seed}.bin")),
        None => cfg.out.join("models").join("full.bin"),
    }
}

pub fn train_log_path(cfg: &RunConfig, split: Option<u64>) -> PathBuf {
    match split {
        Some(seed) => cfg.out.join("logs").join(format!("train-split-{seed}.csv")),
        None => cfg.out.join("logs").join("train-full.csv"),
    }
}

fn load_source(src: &DatasetSource, cfg: &RunConfig) -> Result<Dataset> {
    let d = match src.kind {
        DatasetKind::Movielens => load_movielens(&src.ratings, &src.users, &src.items)?,
        DatasetKind::Bookcrossing => load_bookcrossing_with(&src.ratings, &src.users, &src.items, &cfg.dataset.bookcrossing)?,
    };
    d.validate()?;
    Ok(d)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PrepareOutcome {
    pub stats: DatasetStats,
    pub cache_hit: bool,
    pub source_digest: String,
    pub seconds: f64,
}

/// Parses the raw dump into the dataset cache unless a cache built from
/// identical files already exists.
pub fn prepare(cfg: &RunConfig) -> Result<PrepareOutcome> {
    let start = Instant::now();
    let src = cfg.dataset.resolve()?;
    let digest = source_digest(&src.paths())?;
    let path = cache_path(cfg);
    let cached = read_cache(&path).ok().filter(|c| c.source_digest == digest);
    let cache_hit = cached.is_some();
    let dataset = match cached {
        Some(c) => c.dataset,
        None => {
            std::fs::create_dir_all(&cfg.out).with_context(|| format!("creating {}", cfg.out.display()))?;
            let cached = CachedDataset { source_digest: digest.clone(), dataset: load_source(&src, cfg)? };
            write_cache(&path, &cached)?;
            cached.dataset
        }
    };
    let outcome = PrepareOutcome { stats: dataset.stats(), cache_hit, source_digest: digest, seconds: start.elapsed().as_secs_f64() };
    write_json(&cfg.out.join("stats.json"), "dataset-stats", &cfg.echo(), &outcome)?;
    Ok(outcome)
}

/// Dataset from the cache written by [`prepare`].
pub fn load_prepared(cfg: &RunConfig) -> Result<Dataset> {
    let path = cache_path(cfg);
    if !path.exists() {
        bail!("no prepared dataset at {}; run `mfdcf prepare` first", path.display());
    }
    let cached = read_cache(&path)?;
    if let Ok(src) = cfg.dataset.resolve() {
        if let Ok(digest) = source_digest(&src.paths()) {
            if digest != cached.source_digest {
                log::warn!("{} was built from different source files; rerun `mfdcf prepare`", path.display());
            }
        }
    }
    Ok(cached.dataset)
}

pub fn positive_rule(cfg: &RunConfig, d: &Dataset) -> PositiveRule {
    cfg.eval.positive_rule.clone().unwrap_or_else(|| PositiveRule::for_dataset(&d.name))
}

/// The configured cold-start splits with their seeds.
pub fn splits(cfg: &RunConfig, d: &Dataset) -> Result<Vec<(u64, ColdStartSplit)>> {
    cfg.split.seeds().into_iter().map(|seed| Ok((seed, split_cold_start(d, &SplitSpec { seed, ..cfg.split.clone() })?))).collect()
}

/// Builds the content views on `train` and trains on it.
pub fn fit(train: &Dataset, cfg: &RunConfig, hyper: &Hyperparams) -> Result<(TrainedModel, Vec<IterationRecord>)> {
    let (views, encoders) = build_views(train, &cfg.features)?;
    fit_views(train, &views, &encoders, hyper)
}

fn fit_views(
    train: &Dataset,
    views: &[FeatureBlock],
    encoders: &EncoderSet,
    hyper: &Hyperparams,
) -> Result<(TrainedModel, Vec<IterationRecord>)> {
    let mut sink = |rec: &IterationRecord| {
        log::debug!("iteration {}: objective {:.6e}, change {:.3e}", rec.iteration, rec.objective, rec.relative_change);
    };
    Ok(solver::train(train, views, encoders, hyper, &mut sink)?)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainSummary {
    pub split: Option<u64>,
    pub model: PathBuf,
    pub log: PathBuf,
    pub n_users: usize,
    pub iterations: usize,
    pub final_objective: f64,
    pub final_relative_change: f64,
    pub converged: bool,
}

pub const TRAIN_LOG_HEADER: [&str; 10] = [
    "iteration",
    "objective",
    "relative_change",
    "consensus_gap",
    "seconds",
    "fusion_fit",
    "rating",
    "quantization",
    "rank_penalty",
    "consensus",
];

fn train_log_rows(history: &[IterationRecord]) -> Vec<Vec<String>> {
    history
        .iter()
        .map(|r| {
            let t = &r.terms;
            vec![r.iteration.to_string()]
                .into_iter()
                .chain(
                    [
                        r.objective,
                        r.relative_change,
                        r.consensus_gap,
                        r.seconds,
                        t.fusion_fit,
                        t.rating,
                        t.quantization,
                        t.rank_penalty,
                        t.consensus,
                    ]
                    .iter()
                    .map(f64::to_string),
                )
                .collect()
        })
        .collect()
}

/// Trains one model per split on its train users, or one model on all users.
pub fn train(cfg: &RunConfig, full: bool) -> Result<Vec<TrainSummary>> {
    let data = load_prepared(cfg)?;
    let jobs: Vec<(Option<u64>, Dataset)> =
        if full { vec![(None, data)] } else { splits(cfg, &data)?.into_iter().map(|(seed, s)| (Some(seed), s.train)).collect() };
    let echo = cfg.echo();
    jobs.into_par_iter()
        .map(|(split, train)| {
            let label = split.map_or("all users".to_string(), |s| format!("split {s}"));
            let (model, history) = fit(&train, cfg, &cfg.hyper).with_context(|| format!("training on {label}"))?;
            let path = model_path(cfg, split);
            std::fs::create_dir_all(path.parent().expect("model directory"))?;
            write_model(&path, &model).with_context(|| format!("writing {}", path.display()))?;
            let log = train_log_path(cfg, split);
            write_csv(&log, &echo, &TRAIN_LOG_HEADER, &train_log_rows(&history))?;
            let last = history.last().expect("at least one iteration");
            Ok(TrainSummary {
                split,
                model: path,
                log,
                n_users: model.n_users(),
                iterations: history.len(),
                final_objective: last.objective,
                final_relative_change: last.relative_change,
                converged: last.relative_change < model.hyper.tol,
            })
        })
        .collect()
}

/// Cold-start codes for the users of `test` from their demographics alone.
pub fn cold_codes(model: &TrainedModel, test: &Dataset, cfg: &RunConfig) -> Result<ColdStartBatch> {
    let x = encode_users(model, &test.user_demo, None)?;
    Ok(generate_user_codes(model, &x, &cfg.coldstart)?)
}

fn check_model(model: &TrainedModel, cfg: &RunConfig, train: &Dataset, path: &Path) -> Result<()> {
    ensure!(
        model.n_items() == train.n_items() && model.n_users() == train.n_users(),
        "{} has {} users and {} items but the split trains on {} users and {} items; retrain",
        path.display(),
        model.n_users(),
        model.n_items(),
        train.n_users(),
        train.n_items()
    );
    let (n, m) = train.ratings.shape();
    if model.hyper != cfg.hyper.resolved(n, m) {
        log::warn!("{} was trained with different hyperparameters than configured", path.display());
    }
    Ok(())
}

pub const METHODS: [&str; 3] = ["mfdcf", "random", "popularity"];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalOutcome {
    pub reports: Vec<EvalReport>,
}

impl EvalOutcome {
    pub fn report(&self, method: &str) -> Option<&EvalReport> {
        self.reports.iter().find(|r| r.method == method)
    }
}

pub const EVAL_HEADER: [&str; 4] = ["k", "accuracy", "split", "method"];

/// Accuracy@k of the per-split models on their cold-start users, with the
/// random and popularity baselines.
pub fn eval(cfg: &RunConfig) -> Result<EvalOutcome> {
    let data = load_prepared(cfg)?;
    let rule = positive_rule(cfg, &data);
    let ks = &cfg.eval.ks;
    let m = data.n_items();
    let per_split: Vec<[SplitReport; 3]> = splits(cfg, &data)?
        .into_par_iter()
        .map(|(seed, split)| {
            let path = model_path(cfg, Some(seed));
            if !path.exists() {
                bail!("no model for split {seed} at {}; run `mfdcf train` first", path.display());
            }
            let model = read_model(&path).with_context(|| format!("reading {}", path.display()))?;
            check_model(&model, cfg, &split.train, &path)?;
            let codes = cold_codes(&model, &split.test, cfg)?;
            let ours = accuracy_at_k(&model, &codes, &split.test, ks, &rule, seed)?;
            let random = evaluate_ranker(seed, &split.test.ratings, &rule, ks, |u, k| random_ranking(seed, u, m, k, &[]))?;
            let order = popularity_order(&split.train.ratings);
            let popular = evaluate_ranker(seed, &split.test.ratings, &rule, ks, |_, k| popularity_ranking(&order, k, &[]))?;
            Ok([ours, random, popular])
        })
        .collect::<Result<_>>()?;
    let echo = cfg.echo();
    let reports: Vec<EvalReport> = METHODS
        .iter()
        .enumerate()
        .map(|(i, method)| EvalReport::from_splits(method, &rule, per_split.iter().map(|s| s[i].clone()).collect(), echo.clone()))
        .collect();
    let outcome = EvalOutcome { reports };
    let rows: Vec<Vec<String>> = outcome
        .reports
        .iter()
        .flat_map(EvalReport::csv_rows)
        .map(|(k, a, split, method)| vec![k.to_string(), a.to_string(), split, method])
        .collect();
    write_csv(&cfg.out.join("eval.csv"), &echo, &EVAL_HEADER, &rows)?;
    write_json(&cfg.out.join("eval.json"), "eval-report", &echo, &outcome)?;
    Ok(outcome)
}

/// One grid setting: Accuracy@k averaged over splits, or the training error.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridRow {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub status: String,
    pub accuracy_at_k: BTreeMap<usize, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridOutcome {
    pub rows: Vec<GridRow>,
    /// Cut-off used to pick the best row.
    pub select_k: usize,
    /// Index of the first row with the highest accuracy at `select_k`.
    pub best: Option<usize>,
}

/// Cartesian product of the α, β, γ lists with duplicates removed, in
/// first-occurrence order. An empty list keeps the configured value.
pub fn grid_points(cfg: &RunConfig) -> Vec<(f64, f64, f64)> {
    let or_fixed = |v: &Vec<f64>, fixed: f64| if v.is_empty() { vec![fixed] } else { v.clone() };
    let (alphas, betas, gammas) =
        (or_fixed(&cfg.grid.alpha, cfg.hyper.alpha), or_fixed(&cfg.grid.beta, cfg.hyper.beta), or_fixed(&cfg.grid.gamma, cfg.hyper.gamma));
    let key = |v: f64| (v + 0.0).to_bits();
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for &a in &alphas {
        for &b in &betas {
            for &g in &gammas {
                if seen.insert((key(a), key(b), key(g))) {
                    out.push((a, b, g));
                }
            }
        }
    }
    out
}

/// First row maximizing the accuracy at `k` among completed rows.
pub fn best_row(rows: &[GridRow], k: usize) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, row) in rows.iter().enumerate() {
        if let Some(&a) = row.accuracy_at_k.get(&k) {
            if best.is_none_or(|(_, b)| a > b) {
                best = Some((i, a));
            }
        }
    }
    best.map(|(i, _)| i)
}

pub fn grid_header(ks: &[usize]) -> Vec<String> {
    ["alpha", "beta", "gamma", "status"].iter().map(|s| s.to_string()).chain(ks.iter().map(|k| format!("accuracy@{k}"))).collect()
}

/// Trains and evaluates every grid setting on every split. Settings run in
/// parallel; each is fully determined by its values and the seed.
pub fn grid(cfg: &RunConfig) -> Result<GridOutcome> {
    let points = grid_points(cfg);
    ensure!(!points.is_empty(), "the grid is empty");
    let data = load_prepared(cfg)?;
    let rule = positive_rule(cfg, &data);
    let ks = &cfg.eval.ks;
    let prepared: Vec<(u64, ColdStartSplit, Vec<FeatureBlock>, EncoderSet)> = splits(cfg, &data)?
        .into_iter()
        .map(|(seed, split)| {
            let (views, encoders) = build_views(&split.train, &cfg.features)?;
            Ok((seed, split, views, encoders))
        })
        .collect::<Result<_>>()?;
    let rows: Vec<GridRow> = points
        .par_iter()
        .map(|&(alpha, beta, gamma)| {
            let hyper = Hyperparams { alpha, beta, gamma, ..cfg.hyper.clone() };
            let mut sums: BTreeMap<usize, f64> = BTreeMap::new();
            for (seed, split, views, encoders) in &prepared {
                let model = match fit_views(&split.train, views, encoders, &hyper) {
                    Ok((model, _)) => model,
                    Err(e) => {
                        log::warn!("alpha={alpha} beta={beta} gamma={gamma}: {e:#}");
                        return Ok(GridRow { alpha, beta, gamma, status: format!("{e:#}"), accuracy_at_k: BTreeMap::new() });
                    }
                };
                let codes = cold_codes(&model, &split.test, cfg)?;
                let report = accuracy_at_k(&model, &codes, &split.test, ks, &rule, *seed)?;
                for (k, a) in report.accuracy_at_k {
                    *sums.entry(k).or_default() += a;
                }
            }
            let n = prepared.len() as f64;
            Ok(GridRow { alpha, beta, gamma, status: "ok".into(), accuracy_at_k: sums.into_iter().map(|(k, s)| (k, s / n)).collect() })
        })
        .collect::<Result<_>>()?;
    let select_k = *ks.iter().max().expect("validated non-empty");
    let outcome = GridOutcome { best: best_row(&rows, select_k), rows, select_k };
    let echo = cfg.echo();
    let csv_rows: Vec<Vec<String>> = outcome
        .rows
        .iter()
        .map(|r| {
            let mut row = vec![r.alpha.to_string(), r.beta.to_string(), r.gamma.to_string(), r.status.clone()];
            row.extend(ks.iter().map(|k| r.accuracy_at_k.get(k).map_or(String::new(), f64::to_string)));
            row
        })
        .collect();
    let header = grid_header(ks);
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    write_csv(&cfg.out.join("grid.csv"), &echo, &header, &csv_rows)?;
    write_json(&cfg.out.join("grid.json"), "grid", &echo, &outcome)?;
    Ok(outcome)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchOutcome {
    pub records: Vec<BenchRecord>,
    pub summary: ScalingSummary,
}

pub const BENCH_HEADER: [&str; 8] =
    ["sweep", "bits", "train_fraction", "n_users", "n_items", "timed_iterations", "seconds_per_iteration", "peak_rss_estimate"];

/// Per-iteration training time over code lengths and data fractions.
pub fn bench(cfg: &RunConfig) -> Result<BenchOutcome> {
    let data = load_prepared(cfg)?;
    let (views, _) = build_views(&data, &cfg.features)?;
    let x: Vec<DMatrix<f64>> = views.into_iter().map(|v| v.data).collect();
    let s = data.ratings.to_csr(cfg.hyper.normalize_ratings);
    let records = bench_scaling(&s, &x, &cfg.hyper, &cfg.bench)?;
    let summary = scaling_summary(&records, &cfg.bench);
    let rows: Vec<Vec<String>> = records
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let sweep = if i < cfg.bench.bits.len() { "bits" } else { "fraction" };
            vec![
                sweep.to_string(),
                r.bits.to_string(),
                r.train_fraction.to_string(),
                r.n_users.to_string(),
                r.n_items.to_string(),
                r.timed_iterations.to_string(),
                r.seconds_per_iteration.to_string(),
                r.peak_rss_estimate.to_string(),
            ]
        })
        .collect();
    let echo = cfg.echo();
    write_csv(&cfg.out.join("bench.csv"), &echo, &BENCH_HEADER, &rows)?;
    let outcome = BenchOutcome { records, summary };
    write_json(&cfg.out.join("bench.json"), "bench", &echo, &outcome)?;
    Ok(outcome)
}

/// One line of the cold-start input: demographics and, optionally, rated
/// item indices.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ColdStartRequest {
    #[serde(default)]
    pub id: Option<String>,
    #[serde(default)]
    pub attributes: BTreeMap<String, Value>,
    #[serde(default)]
    pub history: Vec<u32>,
}

impl ColdStartRequest {
    /// Attributes as raw strings; `null` means missing.
    pub fn record(&self) -> DemoRecord {
        self.attributes
            .iter()
            .filter_map(|(k, v)| match v {
                Value::Null => None,
                Value::String(s) => Some((k.clone(), s.clone())),
                other => Some((k.clone(), other.to_string())),
            })
            .collect()
    }
}

/// Parses JSON lines, skipping blank lines; ids default to the line number.
pub fn read_requests(path: &Path) -> Result<Vec<(String, ColdStartRequest)>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut out = Vec::new();
    for (k, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let req: ColdStartRequest =
            serde_json::from_str(line).with_context(|| format!("{}:{}: invalid user record", path.display(), k + 1))?;
        if req.record().is_empty() && req.history.is_empty() {
            bail!("{}:{}: user record is empty", path.display(), k + 1);
        }
        out.push((req.id.clone().unwrap_or_else(|| (k + 1).to_string()), req));
    }
    ensure!(!out.is_empty(), "{}: no user records", path.display());
    Ok(out)
}

const CODES_MAGIC: &[u8; 8] = b"MFDCFCOD";

/// Magic, format version, r, n, then per user `ceil(r/8)` bytes where bit
/// `j % 8` of byte `j / 8` is set when bit j of the code is +1.
pub fn codes_bytes(codes: &DMatrix<f64>) -> Vec<u8> {
    let (r, n) = codes.shape();
    let mut out = Vec::with_capacity(24 + n * r.div_ceil(8));
    out.extend_from_slice(CODES_MAGIC);
    out.extend_from_slice(&OUTPUT_FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(r as u32).to_le_bytes());
    out.extend_from_slice(&(n as u64).to_le_bytes());
    for col in codes.column_iter() {
        let mut bytes = vec![0u8; r.div_ceil(8)];
        for (j, &v) in col.iter().enumerate() {
            if v > 0.0 {
                bytes[j / 8] |= 1 << (j % 8);
            }
        }
        out.extend_from_slice(&bytes);
    }
    out
}

pub fn parse_codes(bytes: &[u8]) -> Result<DMatrix<f64>> {
    ensure!(bytes.len() >= 24 && &bytes[..8] == CODES_MAGIC, "not a codes file");
    let version = u32::from_le_bytes(bytes[8..12].try_into()?);
    ensure!(version == OUTPUT_FORMAT_VERSION, "codes format version {version}, expected {OUTPUT_FORMAT_VERSION}");
    let r = u32::from_le_bytes(bytes[12..16].try_into()?) as usize;
    let n = usize::try_from(u64::from_le_bytes(bytes[16..24].try_into()?))?;
    let stride = r.div_ceil(8);
    ensure!(bytes.len() == 24 + n * stride, "codes file has {} bytes, expected {}", bytes.len(), 24 + n * stride);
    let body = &bytes[24..];
    Ok(DMatrix::from_fn(r, n, |j, u| if body[u * stride + j / 8] >> (j % 8) & 1 == 1 { 1.0 } else { -1.0 }))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ColdStartOutcome {
    pub ids: Vec<String>,
    pub batch: ColdStartBatch,
    pub codes_bin: PathBuf,
    pub codes_txt: PathBuf,
}

/// Codes for new users read from a JSON-lines file.
pub fn coldstart(cfg: &RunConfig, model: Option<&Path>, input: &Path) -> Result<ColdStartOutcome> {
    let path = model.map_or_else(|| model_path(cfg, None), Path::to_path_buf);
    let model = read_model(&path).with_context(|| format!("reading {}", path.display()))?;
    let requests = read_requests(input)?;
    let records: Vec<DemoRecord> = requests.iter().map(|(_, r)| r.record()).collect();
    let histories: Vec<Vec<u32>> = requests.iter().map(|(_, r)| r.history.clone()).collect();
    let x = encode_users(&model, &records, Some(&histories)).with_context(|| format!("encoding {}", input.display()))?;
    let batch = generate_user_codes(&model, &x, &cfg.coldstart)?;
    let ids: Vec<String> = requests.into_iter().map(|(id, _)| id).collect();

    let codes_bin = cfg.out.join("codes.bin");
    write_atomic(&codes_bin, &codes_bytes(&batch.codes))?;
    let mut txt = format!("# mfdcf-format: {OUTPUT_FORMAT_VERSION}\n# config: {}\nid\tcode\tweights\tzero_projection\n", cfg.echo());
    for (u, id) in ids.iter().enumerate() {
        let code: String = batch.codes.column(u).iter().map(|&v| if v > 0.0 { '+' } else { '-' }).collect();
        let weights: Vec<String> = batch.mu.column(u).iter().map(f64::to_string).collect();
        txt.push_str(&format!("{id}\t{code}\t{}\t{}\n", weights.join(","), batch.zero_projection[u]));
    }
    let codes_txt = cfg.out.join("codes.txt");
    write_atomic(&codes_txt, txt.as_bytes())?;
    Ok(ColdStartOutcome { ids, batch, codes_bin, codes_txt })
}
