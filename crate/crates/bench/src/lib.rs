//! Fixtures shared by the benchmarks.

use mfdcf_core::data::EncoderSet;
use mfdcf_core::numerics::CsrMatrix;
use mfdcf_core::solver::{Hyperparams, TrainedModel, Trainer};
use mfdcf_core::synthetic::{synthetic_ratings, SyntheticRatingsSpec};
use nalgebra::DMatrix;

/// Synthetic ratings with a tenth of the MovieLens-1M users, items and
/// ratings.
pub fn small_ratings() -> (CsrMatrix, Vec<DMatrix<f64>>) {
    synthetic_ratings(&SyntheticRatingsSpec { n_users: 604, n_items: 395, n_ratings: 100_020, view_dims: vec![30, 128], seed: 0 })
}

/// Model after `iters` iterations on [`small_ratings`].
pub fn small_model(bits: usize, iters: usize) -> (TrainedModel, Vec<DMatrix<f64>>) {
    let (s, views) = small_ratings();
    let hyper = Hyperparams { bits, ..Hyperparams::default() };
    let mut trainer = Trainer::new(&s, &views, &hyper).expect("trainer");
    for _ in 0..iters {
        trainer.step().expect("step");
    }
    let dims: Vec<usize> = views.iter().map(DMatrix::nrows).collect();
    let model = TrainedModel {
        w: trainer.fusion.w.clone(),
        d: trainer.state.d.clone(),
        r: trainer.state.r.clone(),
        b: trainer.state.b.clone(),
        hyper: trainer.hyper().clone(),
        dataset: "synthetic".into(),
        encoders: EncoderSet::raw(&dims),
    };
    (model, views)
}
