//! Likelihood-free inference with learned summary statistics.
//!
//! A neural network trained to regress θ on simulated data approximates the
//! posterior mean E[θ | X], which is then used as the summary statistic in
//! rejection ABC. The crate ships two simulators with exact oracles (a
//! toroidal Ising model and an MA(2) time series), a least-squares baseline,
//! rejection samplers, and the metrics used to compare them.

pub mod abc;
pub mod checkpoint;
pub mod dataset;
pub mod eval;
pub mod models;
pub mod nn;
pub mod prior;
pub mod rng;
pub mod semiauto;
pub mod types;

#[cfg(feature = "cli")]
pub mod cli;

pub use types::{DataVec, ParamVec, Split};
