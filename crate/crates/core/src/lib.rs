//! Toolkit for studying when better forecasts make worse decisions.
//!
//! The crate simulates harvested populations under competing models, solves
//! the resulting decision problems, scores each model's forecasts, and
//! compares the management outcomes those models produce. See the runnable
//! programs under `examples/` for an overview of each piece.

pub mod adaptive;
pub mod ecosystem;
pub mod error;
pub mod growth;
pub mod harness;
pub mod mdp;
pub mod outcomes;
pub mod reference;
pub mod rng;
pub mod scoring;
pub mod stats;

pub use error::{Error, Result};
