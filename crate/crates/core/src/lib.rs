//! Multi-feature discrete collaborative filtering: binary user and item
//! codes learned from ratings and user content features, with cold-start
//! code generation for users that have no ratings.

pub(crate) mod codec;
pub mod coldstart;
pub mod data;
pub mod eval;
pub mod fusion;
pub mod numerics;
pub mod rng;
pub mod solver;
pub mod synthetic;
