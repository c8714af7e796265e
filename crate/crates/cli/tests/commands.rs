mod common;

use std::fs;
use std::process::Command;

use common::{Fixture, MOVIES, USERS};
use mfdcf_cli::commands::{self, best_row, grid_points, parse_codes};
use mfdcf_cli::config::{Overrides, RunConfig, PAPER_GRID};
use mfdcf_cli::output::read_csv_rows;
use mfdcf_core::coldstart::{encode_users, generate_user_codes};
use mfdcf_core::eval::accuracy_at_k;
use mfdcf_core::solver::read_model;

#[test]
fn flags_override_file_override_defaults() {
    let fx = Fixture::new();
    let from_file = fx.config();
    assert_eq!(from_file.hyper.bits, 8);
    assert_eq!(from_file.hyper.alpha, 1e3);
    let flags = Overrides { bits: Some(16), alpha: Some(2.0), seed: Some(9), ..Default::default() };
    let cfg = RunConfig::load(Some(&fx.config_path), &flags).unwrap();
    assert_eq!((cfg.hyper.bits, cfg.hyper.alpha, cfg.hyper.seed, cfg.split.seed), (16, 2.0, 9, 9));
    assert_eq!(cfg.hyper.max_iters, 8);
    let defaults = RunConfig::load(None, &Overrides::default()).unwrap();
    assert_eq!(defaults, RunConfig::default());
    assert_eq!(defaults.eval.ks, vec![2, 4, 6, 8, 10, 12, 14, 16, 18, 20]);
    assert_eq!(defaults.grid.alpha, PAPER_GRID.to_vec());
}

#[test]
fn unknown_keys_and_invalid_values_are_rejected() {
    assert!(RunConfig::from_toml("[hyper]\nbitz = 8\n").is_err());
    assert!(RunConfig::from_toml("colour = 1\n").is_err());
    let fx = Fixture::new();
    let bad = fx.dir.path().join("bad.toml");
    fs::write(&bad, "[hyper]\nlambda = 0.0\n").unwrap();
    assert!(RunConfig::load(Some(&bad), &Overrides::default()).is_err());
    fs::write(&bad, "[split]\ncold_fraction = 1.5\n").unwrap();
    assert!(RunConfig::load(Some(&bad), &Overrides::default()).is_err());
    fs::write(&bad, "[eval]\nks = []\n").unwrap();
    assert!(RunConfig::load(Some(&bad), &Overrides::default()).is_err());
}

#[test]
fn prepare_reports_stats_and_reuses_cache() {
    let fx = Fixture::new();
    let cfg = fx.config();
    let first = commands::prepare(&cfg).unwrap();
    assert!(!first.cache_hit);
    assert_eq!((first.stats.users, first.stats.items, first.stats.ratings), (USERS, MOVIES, USERS * 8));
    assert!((first.stats.sparsity - (1.0 - 8.0 / MOVIES as f64)).abs() < 1e-12);
    let bytes = fs::read(commands::cache_path(&cfg)).unwrap();
    let second = commands::prepare(&cfg).unwrap();
    assert!(second.cache_hit);
    assert_eq!(second.stats, first.stats);
    assert_eq!(fs::read(commands::cache_path(&cfg)).unwrap(), bytes);
    let stats: serde_json::Value = serde_json::from_slice(&fs::read(cfg.out.join("stats.json")).unwrap()).unwrap();
    assert_eq!(stats["format_version"], 1);
    assert_eq!(stats["config"]["hyper"]["bits"], 8);
    assert_eq!(stats["stats"]["users"], USERS);
}

#[test]
fn commands_need_a_prepared_dataset() {
    let fx = Fixture::new();
    let err = commands::train(&fx.config(), false).unwrap_err();
    assert!(format!("{err:#}").contains("mfdcf prepare"));
}

#[test]
fn training_is_byte_identical_across_runs() {
    let fx = Fixture::new();
    let a = fx.config_with_out("a");
    let b = fx.config_with_out("b");
    for cfg in [&a, &b] {
        commands::prepare(cfg).unwrap();
        let summaries = commands::train(cfg, false).unwrap();
        assert_eq!(summaries.len(), 2);
        assert!(summaries.iter().all(|s| s.final_objective.is_finite() && s.n_users == USERS - 10));
    }
    for seed in [0, 1] {
        let ma = fs::read(commands::model_path(&a, Some(seed))).unwrap();
        let mb = fs::read(commands::model_path(&b, Some(seed))).unwrap();
        assert_eq!(ma, mb);
    }
    let (header, rows) = read_csv_rows(&commands::train_log_path(&a, Some(0))).unwrap();
    assert_eq!(header, commands::TRAIN_LOG_HEADER);
    assert!(!rows.is_empty() && rows.len() <= 8);
    assert!(rows.iter().all(|r| r[1].parse::<f64>().unwrap().is_finite()));
    let text = fs::read_to_string(commands::train_log_path(&a, Some(0))).unwrap();
    assert!(text.starts_with("# mfdcf-format: 1\n# config: {"));
}

#[test]
fn eval_matches_direct_computation() {
    let fx = Fixture::new();
    let cfg = fx.config();
    commands::prepare(&cfg).unwrap();
    assert!(commands::eval(&cfg).is_err());
    commands::train(&cfg, false).unwrap();
    let outcome = commands::eval(&cfg).unwrap();
    assert_eq!(outcome.reports.len(), 3);

    let data = commands::load_prepared(&cfg).unwrap();
    let rule = commands::positive_rule(&cfg, &data);
    let ours = outcome.report("mfdcf").unwrap();
    for ((seed, split), reported) in commands::splits(&cfg, &data).unwrap().into_iter().zip(&ours.per_split) {
        let model = read_model(&commands::model_path(&cfg, Some(seed))).unwrap();
        let x = encode_users(&model, &split.test.user_demo, None).unwrap();
        let codes = generate_user_codes(&model, &x, &cfg.coldstart).unwrap();
        let direct = accuracy_at_k(&model, &codes, &split.test, &cfg.eval.ks, &rule, seed).unwrap();
        assert_eq!(&direct, reported);
    }

    for report in &outcome.reports {
        let accs: Vec<f64> = report.accuracy_at_k.values().copied().collect();
        assert!(accs.windows(2).all(|w| w[0] <= w[1]));
        for (&k, &mean) in &report.mean_accuracy_at_k {
            let per: f64 = report.per_split.iter().map(|s| s.accuracy_at_k[&k]).sum::<f64>() / report.per_split.len() as f64;
            assert_eq!(mean, per);
        }
    }

    let (header, rows) = read_csv_rows(&cfg.out.join("eval.csv")).unwrap();
    assert_eq!(header, commands::EVAL_HEADER);
    assert_eq!(rows.len(), 3 * 3 * cfg.eval.ks.len());
    for method in commands::METHODS {
        for k in &cfg.eval.ks {
            let k = k.to_string();
            let select = |split: &str| -> Vec<f64> {
                rows.iter()
                    .filter(|r| r[0] == k && r[3] == method && (split == "*" && r[2] != "mean" || r[2] == split))
                    .map(|r| r[1].parse().unwrap())
                    .collect()
            };
            let per = select("*");
            let mean = select("mean");
            assert_eq!(per.len(), 2);
            assert!((mean[0] - per.iter().sum::<f64>() / 2.0).abs() < 1e-15);
        }
    }
}

#[test]
fn grid_deduplicates_and_picks_the_best_row() {
    let fx = Fixture::new();
    let cfg = fx.config();
    assert_eq!(grid_points(&cfg), vec![(1.0, 10.0, 1.0), (1000.0, 10.0, 1.0)]);
    let mut sweep = cfg.clone();
    sweep.grid.alpha = PAPER_GRID.to_vec();
    assert_eq!(grid_points(&sweep).len(), 7);
    sweep.grid.beta = vec![1.0, 10.0];
    assert_eq!(grid_points(&sweep).len(), 14);

    commands::prepare(&cfg).unwrap();
    let outcome = commands::grid(&cfg).unwrap();
    assert_eq!(outcome.rows.len(), 2);
    let (header, rows) = read_csv_rows(&cfg.out.join("grid.csv")).unwrap();
    assert_eq!(header.len(), 4 + cfg.eval.ks.len());
    assert_eq!(rows.len(), 2);
    let col = header.iter().position(|h| h == "accuracy@8").unwrap();
    let values: Vec<f64> = rows.iter().map(|r| r[col].parse().unwrap()).collect();
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let best = outcome.best.unwrap();
    assert_eq!(values[best], max);
    assert_eq!(best_row(&outcome.rows, 8), Some(values.iter().position(|&v| v == max).unwrap()));
}

#[test]
fn bench_emits_one_row_per_configuration() {
    let fx = Fixture::new();
    let cfg = fx.config();
    commands::prepare(&cfg).unwrap();
    let outcome = commands::bench(&cfg).unwrap();
    assert_eq!(outcome.records.len(), 4);
    assert!(outcome.records.iter().all(|r| r.seconds_per_iteration > 0.0));
    let (header, rows) = read_csv_rows(&cfg.out.join("bench.csv")).unwrap();
    assert_eq!(header, commands::BENCH_HEADER);
    assert_eq!(rows.iter().filter(|r| r[0] == "bits").count(), 2);
    assert_eq!(rows.iter().filter(|r| r[0] == "fraction").count(), 2);
}

#[test]
fn coldstart_writes_codes_for_json_lines() {
    let fx = Fixture::new();
    let cfg = fx.config();
    commands::prepare(&cfg).unwrap();
    commands::train(&cfg, true).unwrap();
    let input = fx.dir.path().join("users.jsonl");
    fs::write(
        &input,
        concat!(
            "{\"id\": \"ann\", \"attributes\": {\"gender\": \"F\", \"age\": 25}}\n",
            "\n",
            "{\"attributes\": {\"gender\": \"M\", \"occupation\": \"3\"}, \"history\": [20, 21]}\n",
            "{\"history\": [0, 1, 2]}\n",
        ),
    )
    .unwrap();
    let outcome = commands::coldstart(&cfg, None, &input).unwrap();
    assert_eq!(outcome.ids, vec!["ann", "3", "4"]);
    let codes = parse_codes(&fs::read(&outcome.codes_bin).unwrap()).unwrap();
    assert_eq!(codes, outcome.batch.codes);
    assert!(codes.iter().all(|&v| v == 1.0 || v == -1.0));
    let txt = fs::read_to_string(&outcome.codes_txt).unwrap();
    let lines: Vec<&str> = txt.lines().collect();
    assert!(lines[0].starts_with("# mfdcf-format: 1"));
    assert_eq!(lines[2], "id\tcode\tweights\tzero_projection");
    assert_eq!(lines.len(), 6);
    assert!(lines[3].starts_with("ann\t"));
    assert_eq!(lines[3].split('\t').nth(1).unwrap().len(), 8);

    fs::write(&input, "{\"attributes\": {\"gender\": \"F\"}}\n{}\n").unwrap();
    let err = format!("{:#}", commands::coldstart(&cfg, None, &input).unwrap_err());
    assert!(err.contains(":2:") && err.contains("empty"), "{err}");
    fs::write(&input, "{\"attributes\": {\"shoe_size\": \"9\"}}\n").unwrap();
    assert!(commands::coldstart(&cfg, None, &input).is_err());
    fs::write(&input, "{\"history\": [999]}\n").unwrap();
    assert!(commands::coldstart(&cfg, None, &input).is_err());
}

#[test]
fn binary_exit_status_reflects_errors() {
    let fx = Fixture::new();
    let bin = env!("CARGO_BIN_EXE_mfdcf");
    let ok = Command::new(bin).arg("prepare").arg("--config").arg(&fx.config_path).output().unwrap();
    assert!(ok.status.success(), "{}", String::from_utf8_lossy(&ok.stderr));
    let stdout = String::from_utf8_lossy(&ok.stdout);
    assert!(stdout.contains("movielens-1m: 40 users, 30 items, 320 ratings"), "{stdout}");
    let bad = Command::new(bin).args(["train", "--lambda=-1"]).arg("--config").arg(&fx.config_path).output().unwrap();
    assert!(!bad.status.success());
    assert!(String::from_utf8_lossy(&bad.stderr).contains("lambda"));
    let missing = Command::new(bin).args(["prepare", "--dataset"]).arg(fx.dir.path().join("nowhere")).output().unwrap();
    assert!(!missing.status.success());
    let workers = Command::new(bin).arg("prepare").arg("--config").arg(&fx.config_path).env("MFDCF_WORKERS", "zero").output().unwrap();
    assert!(!workers.status.success());
}

#[test]
fn readme_config_is_the_default() {
    let readme = fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/../../README.md")).unwrap();
    let block = readme.split("```toml\n").nth(1).unwrap().split("```").next().unwrap();
    let cfg = RunConfig::from_toml(block).unwrap();
    cfg.validate().unwrap();
    let mut expected = RunConfig { out: "runs/ml".into(), ..RunConfig::default() };
    expected.dataset.dir = Some("data/ml-1m".into());
    assert_eq!(cfg, expected);
}
