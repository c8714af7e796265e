//! Front end of the `mfdcf` binary: configuration, subcommands and
//! versioned outputs.

pub mod args;
pub mod commands;
pub mod config;
pub mod output;

use anyhow::{Context, Result};

use args::{Cli, Command};
use config::RunConfig;

/// Environment variable holding the worker thread count.
pub const WORKERS_ENV: &str = "MFDCF_WORKERS";

pub fn configure_workers() -> Result<()> {
    let Ok(raw) = std::env::var(WORKERS_ENV) else {
        return Ok(());
    };
    let n: usize = raw.trim().parse().ok().filter(|&n| n > 0).with_context(|| format!("{WORKERS_ENV}={raw} is not a positive integer"))?;
    if rayon::ThreadPoolBuilder::new().num_threads(n).build_global().is_err() {
        log::debug!("worker pool already initialized");
    }
    Ok(())
}

fn percent(v: f64) -> String {
    format!("{:.2}%", 100.0 * v)
}

pub fn run(cli: &Cli) -> Result<()> {
    configure_workers()?;
    let cfg = RunConfig::load(cli.global.config.as_deref(), &cli.global.overrides())?;
    match &cli.command {
        Command::Prepare => {
            let o = commands::prepare(&cfg)?;
            let s = &o.stats;
            println!(
                "{}: {} users, {} items, {} ratings, sparsity {}{}",
                s.name,
                s.users,
                s.items,
                s.ratings,
                percent(s.sparsity),
                if o.cache_hit { " (cached)" } else { "" }
            );
        }
        Command::Train { full } => {
            for s in commands::train(&cfg, *full)? {
                let label = s.split.map_or("all users".to_string(), |k| format!("split {k}"));
                println!(
                    "{label}: {} iterations, objective {:.6e}, relative change {:.2e}{} -> {}",
                    s.iterations,
                    s.final_objective,
                    s.final_relative_change,
                    if s.converged { "" } else { " (not converged)" },
                    s.model.display()
                );
            }
        }
        Command::Coldstart { model, input } => {
            let o = commands::coldstart(&cfg, model.as_deref(), input)?;
            println!("{} codes -> {}, {}", o.ids.len(), o.codes_bin.display(), o.codes_txt.display());
        }
        Command::Eval => {
            let o = commands::eval(&cfg)?;
            println!("method\t{}", cfg.eval.ks.iter().map(|k| format!("@{k}")).collect::<Vec<_>>().join("\t"));
            for r in &o.reports {
                let cells: Vec<String> = cfg.eval.ks.iter().map(|k| format!("{:.4}", r.mean_accuracy_at_k[k])).collect();
                println!("{}\t{}", r.method, cells.join("\t"));
            }
        }
        Command::Grid => {
            let o = commands::grid(&cfg)?;
            println!("{} settings -> {}", o.rows.len(), cfg.out.join("grid.csv").display());
            if let Some(best) = o.best.map(|i| &o.rows[i]) {
                println!(
                    "best at @{}: alpha={} beta={} gamma={} accuracy {:.4}",
                    o.select_k, best.alpha, best.beta, best.gamma, best.accuracy_at_k[&o.select_k]
                );
            }
        }
        Command::Bench => {
            let o = commands::bench(&cfg)?;
            for r in &o.records {
                println!(
                    "r={:<4} fraction={:<5} users={:<6} {:.4e} s/iteration",
                    r.bits, r.train_fraction, r.n_users, r.seconds_per_iteration
                );
            }
            if let Some(f) = o.summary.users_fit {
                println!("time vs users: R^2 = {:.4}", f.r_squared);
            }
            if let Some(f) = o.summary.log_bits_fit {
                println!("log time vs log r: slope = {:.3}", f.slope);
            }
        }
    }
    Ok(())
}
