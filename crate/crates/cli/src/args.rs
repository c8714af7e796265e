//! Command-line syntax.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::config::Overrides;

#[derive(Debug, Parser)]
#[command(name = "mfdcf", version, about = "Multi-feature discrete collaborative filtering for cold-start recommendation")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// TOML configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Directory with a MovieLens-1M or BookCrossing dump.
    #[arg(long, global = true)]
    pub dataset: Option<PathBuf>,
    /// Code length r.
    #[arg(long, global = true)]
    pub bits: Option<usize>,
    #[arg(long, global = true)]
    pub alpha: Option<f64>,
    #[arg(long, global = true)]
    pub beta: Option<f64>,
    #[arg(long, global = true)]
    pub gamma: Option<f64>,
    #[arg(long, global = true)]
    pub lambda: Option<f64>,
    #[arg(long, global = true)]
    pub rank_budget: Option<usize>,
    #[arg(long, global = true)]
    pub svd_rank: Option<usize>,
    /// Seed of training and of the first split.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

impl GlobalArgs {
    pub fn overrides(&self) -> Overrides {
        Overrides {
            dataset: self.dataset.clone(),
            bits: self.bits,
            alpha: self.alpha,
            beta: self.beta,
            gamma: self.gamma,
            lambda: self.lambda,
            rank_budget: self.rank_budget,
            svd_rank: self.svd_rank,
            seed: self.seed,
            out: self.out.clone(),
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse the raw dump into the dataset cache and print its statistics.
    Prepare,
    /// Train one model per cold-start split, or one on all users.
    Train {
        #[arg(long)]
        full: bool,
    },
    /// Generate codes for new users from a JSON-lines file.
    Coldstart {
        /// Model file; defaults to the all-users model.
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        input: PathBuf,
    },
    /// Accuracy@k of the split models and the baselines.
    Eval,
    /// Sweep alpha, beta and gamma.
    Grid,
    /// Time training iterations over code lengths and data fractions.
    Bench,
}
