//! Recognizing the recommender system behind observed interactions in a
//! temporal co-authorship graph.
//!
//! The pipeline: train a recommender-neutral user model on real data
//! ([`model::train_rnu`]), generate a synthetic dataset per candidate
//! recommender ([`synthgen::generate_rhsd`]), retrain a user model under every
//! recommender hypothesis and compare held-out negative log-likelihoods
//! ([`recognition::run_grid`]).

pub mod error;
pub mod graph;
pub mod model;
pub mod numerics;
pub mod recommenders;
pub mod recognition;
pub mod rng;
pub mod synthgen;

pub use error::{Error, Result};
