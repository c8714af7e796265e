//! Named random streams derived from a single run seed.
//!
//! Every stochastic component (cold-start split, solver init, baselines,
//! randomized SVD) draws from its own ChaCha stream so that changing one
//! component never perturbs the others.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub const SPLIT: &str = "split";
pub const INIT: &str = "init";
pub const BASELINE: &str = "baseline";
pub const SVD: &str = "truncated-svd";

fn fnv1a(name: &str) -> u64 {
    name.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3))
}

/// Deterministic generator for the stream `name` under `seed`.
pub fn stream(seed: u64, name: &str) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(fnv1a(name));
    rng
}

/// Sub-stream keyed by an index, e.g. one stream per user.
pub fn indexed_stream(seed: u64, name: &str, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ index.wrapping_mul(0x9e37_79b9_7f4a_7c15));
    rng.set_stream(fnv1a(name));
    rng
}

pub fn gaussian_matrix<R: rand::Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> DMatrix<f64> {
    // filled column-major, so the draw order is fixed by (rows, cols)
    DMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(rng))
}
