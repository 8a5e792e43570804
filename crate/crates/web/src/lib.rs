//! Browser demo: Ising lattice draws, the MA(2) exact posterior grid, and
//! rejection ABC with the auto-covariance summary.
//!
//! The plain functions return `Result<_, String>` and are tested natively; the
//! `#[wasm_bindgen]` wrappers only convert errors.

use abcnet::abc::{abc_reject_summary, AbcConfig, AcceptanceMode, DistanceMode, Ma2Autocov};
use abcnet::eval::moments;
use abcnet::models::ising::{ising_sufficient_stat, IsingModel};
use abcnet::models::{ma2_exact_posterior, Ma2Model, Simulator};
use abcnet::prior::PriorSpec;
use abcnet::rng::{derive_seed, lane, RngStream};
use abcnet::{DataVec, ParamVec};
use wasm_bindgen::prelude::*;

/// Largest lattice side the page will simulate.
pub const MAX_SIDE: usize = 64;
/// Largest MA(2) series length.
pub const MAX_SERIES: usize = 1000;
/// Largest posterior grid resolution.
pub const MAX_RESOLUTION: usize = 400;
/// Largest ABC proposal count.
pub const MAX_PROPOSALS: usize = 200_000;

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

/// One Metropolis draw of an m×m lattice (spins ±1, row-major).
pub fn sample_ising(m: usize, theta: f64, burn_in: usize, seed: u64) -> Result<Vec<i8>, String> {
    if !(2..=MAX_SIDE).contains(&m) {
        return Err(format!("lattice side must be in 2..={MAX_SIDE}"));
    }
    if !(theta.is_finite() && theta >= 0.0) {
        return Err("θ must be a non-negative number".into());
    }
    let model = IsingModel::with_schedule(m, burn_in, 1).map_err(err)?;
    let mut rng = RngStream::new(derive_seed(seed, lane::OBSERVED), 0);
    Ok(model.simulate_spins(theta, &mut rng))
}

/// Neighbour-product sum S* of a lattice.
pub fn sufficient_stat(spins: &[i8], m: usize) -> Result<f64, String> {
    let x = DataVec(spins.iter().map(|&s| f64::from(s)).collect());
    ising_sufficient_stat(&x, m).map_err(err)
}

/// An MA(2) series of length `p` with unit Gaussian innovations.
pub fn simulate_ma2(theta1: f64, theta2: f64, p: usize, seed: u64) -> Result<Vec<f64>, String> {
    if !(3..=MAX_SERIES).contains(&p) {
        return Err(format!("series length must be in 3..={MAX_SERIES}"));
    }
    if !PriorSpec::UniformTriangleMA2.contains(&[theta1, theta2]) {
        return Err(format!("({theta1}, {theta2}) lies outside the identifiable triangle"));
    }
    let model = Ma2Model::new(p).map_err(err)?;
    let mut rng = RngStream::new(derive_seed(seed, lane::OBSERVED), 0);
    Ok(model.simulate(&ParamVec(vec![theta1, theta2]), &mut rng).0)
}

/// Posterior mass on a grid plus its moments.
#[wasm_bindgen]
#[derive(Clone, Debug)]
pub struct Posterior {
    resolution: usize,
    mass: Vec<f64>,
    mean: [f64; 2],
    std: [f64; 2],
    cor: f64,
}

#[wasm_bindgen]
impl Posterior {
    #[wasm_bindgen(getter)]
    pub fn resolution(&self) -> usize {
        self.resolution
    }
    /// Row-major cell masses, rows θ2 ∈ [−1, 1] bottom-up, columns θ1 ∈ [−2, 2].
    pub fn mass(&self) -> Vec<f64> {
        self.mass.clone()
    }
    /// [mean θ1, mean θ2, std θ1, std θ2, cor].
    pub fn summary(&self) -> Vec<f64> {
        vec![self.mean[0], self.mean[1], self.std[0], self.std[1], self.cor]
    }
}

/// Exact MA(2) posterior under the uniform triangle prior.
pub fn ma2_posterior_grid(x: &[f64], resolution: usize) -> Result<Posterior, String> {
    if !(2..=MAX_RESOLUTION).contains(&resolution) {
        return Err(format!("resolution must be in 2..={MAX_RESOLUTION}"));
    }
    let g = ma2_exact_posterior(&DataVec(x.to_vec()), resolution).map_err(err)?;
    let mo = g.moments();
    Ok(Posterior {
        resolution,
        mass: g.mass,
        mean: [mo.mean[0], mo.mean[1]],
        std: [mo.std[0], mo.std[1]],
        cor: mo.cor.unwrap_or(f64::NAN),
    })
}

/// Accepted draws of a rejection-ABC run.
#[wasm_bindgen]
#[derive(Clone, Debug)]
pub struct AbcDraws {
    thetas: Vec<f64>,
    epsilon: f64,
    n_proposed: usize,
    summary: [f64; 5],
}

#[wasm_bindgen]
impl AbcDraws {
    /// Interleaved (θ1, θ2) pairs.
    pub fn thetas(&self) -> Vec<f64> {
        self.thetas.clone()
    }
    #[wasm_bindgen(getter)]
    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }
    #[wasm_bindgen(getter)]
    pub fn n_proposed(&self) -> usize {
        self.n_proposed
    }
    /// [mean θ1, mean θ2, std θ1, std θ2, cor].
    pub fn summary(&self) -> Vec<f64> {
        self.summary.to_vec()
    }
}

/// Rejection ABC on the lag-1/lag-2 auto-covariances, accepting the closest
/// `fraction` of `n_proposals` prior draws.
pub fn abc_autocov(x: &[f64], n_proposals: usize, fraction: f64, seed: u64) -> Result<AbcDraws, String> {
    if !(1..=MAX_PROPOSALS).contains(&n_proposals) {
        return Err(format!("proposal count must be in 1..={MAX_PROPOSALS}"));
    }
    let model = Ma2Model::new(x.len()).map_err(err)?;
    let cfg = AbcConfig {
        n_proposals,
        acceptance_mode: AcceptanceMode::Quantile { fraction },
        distance: DistanceMode::StandardizedEuclidean,
        seed,
    };
    let r = abc_reject_summary(&PriorSpec::UniformTriangleMA2, &model, &Ma2Autocov, &DataVec(x.to_vec()), &cfg)
        .map_err(err)?;
    let mo = moments(&r.accepted).map_err(err)?;
    let std = |k: usize| mo.std.get(k).copied().unwrap_or(f64::NAN);
    Ok(AbcDraws {
        thetas: r.accepted.iter().flat_map(|t| t.0.iter().copied()).collect(),
        epsilon: r.realized_epsilon,
        n_proposed: r.n_proposed,
        summary: [mo.mean[0], mo.mean[1], std(0), std(1), mo.cor.unwrap_or(f64::NAN)],
    })
}

// ---- JS exports

fn js(e: String) -> JsError {
    JsError::new(&e)
}

#[wasm_bindgen(js_name = sampleIsing)]
pub fn js_sample_ising(m: usize, theta: f64, burn_in: usize, seed: u64) -> Result<Vec<i8>, JsError> {
    sample_ising(m, theta, burn_in, seed).map_err(js)
}

#[wasm_bindgen(js_name = sufficientStat)]
pub fn js_sufficient_stat(spins: &[i8], m: usize) -> Result<f64, JsError> {
    sufficient_stat(spins, m).map_err(js)
}

#[wasm_bindgen(js_name = simulateMa2)]
pub fn js_simulate_ma2(theta1: f64, theta2: f64, p: usize, seed: u64) -> Result<Vec<f64>, JsError> {
    simulate_ma2(theta1, theta2, p, seed).map_err(js)
}

#[wasm_bindgen(js_name = ma2Posterior)]
pub fn js_ma2_posterior(x: &[f64], resolution: usize) -> Result<Posterior, JsError> {
    ma2_posterior_grid(x, resolution).map_err(js)
}

#[wasm_bindgen(js_name = abcAutocov)]
pub fn js_abc_autocov(x: &[f64], n_proposals: usize, fraction: f64, seed: u64) -> Result<AbcDraws, JsError> {
    abc_autocov(x, n_proposals, fraction, seed).map_err(js)
}
