//! Teacher-student CVaR portfolio toolkit.
//!
//! A convex CVaR optimizer labels decision dates with target weights; dense
//! and variational-Bayes networks distill those labels; synthetic markets,
//! constraint-aware execution, stress transforms and a seeded evaluation
//! grid measure what the students learned.

pub mod allocators;
pub mod config;
pub mod error;
pub mod eval;
pub mod exec;
pub mod features;
pub mod grid;
pub mod io;
pub mod linalg;
pub mod manifest;
pub mod nn;
pub mod panel;
pub mod rng;
pub mod stats;
pub mod stress;
pub mod synth;
pub mod train;

pub use error::{Error, Result};
