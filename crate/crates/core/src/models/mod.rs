//! Forward simulators and their exact oracles.

pub mod ising;
pub mod ma2;

pub use ising::{ising_exact_posterior_mean, IsingEnumeration, IsingError, IsingModel};
pub use ma2::{ma2_autocovariance, ma2_exact_posterior, ma2_loglikelihood, Ma2Error, Ma2Model, Ma2PosteriorGrid};

use crate::rng::RngStream;
use crate::types::{DataVec, ParamVec};

/// A generative model X ~ M(θ).
pub trait Simulator: Sync {
    fn simulate(&self, theta: &ParamVec, rng: &mut RngStream) -> DataVec;

    /// Data dimension p.
    fn data_dim(&self) -> usize;

    /// Parameter dimension q.
    fn param_dim(&self) -> usize;

    /// True when the data space is discrete, so exact matching has
    /// positive probability.
    fn is_discrete(&self) -> bool;

    fn tag(&self) -> &'static str;
}
