//! Square-lattice Ising model on a torus.
//!
//! p(X | θ) ∝ exp(θ S*(X)) with S*(X) = Σ over nearest-neighbour edges of
//! X_j X_k. With periodic boundaries every site has a right and a down edge,
//! so there are 2m² edges and S* ∈ [−2m², 2m²] in steps of 4. On the 2×2
//! torus the right and left neighbours coincide; the edge set is then a
//! multigraph and the same formula applies.

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use super::Simulator;
use crate::prior::PriorSpec;
use crate::rng::RngStream;
use crate::types::{DataVec, ParamVec};

pub const DEFAULT_BURN_IN: usize = 1000;
/// Largest side length the enumeration oracle will accept (2^16 states).
pub const MAX_ENUMERATION_SIDE: usize = 4;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum IsingError {
    #[error("lattice side must be at least 2, got {0}")]
    SideTooSmall(usize),
    #[error("at least one sweep is required")]
    NoSweeps,
    #[error("state has {got} entries, expected {expected} for an {m}x{m} lattice")]
    Length { got: usize, expected: usize, m: usize },
    #[error("entry {index} is {value}, expected -1 or +1")]
    NotASpin { index: usize, value: f64 },
    #[error("exact enumeration refused for m = {0} (limit {MAX_ENUMERATION_SIDE})")]
    TooLarge(usize),
    #[error("the Ising oracle needs an exponential prior")]
    UnsupportedPrior,
    #[error("theta grid must have at least two increasing points")]
    BadGrid,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IsingModel {
    pub m: usize,
    /// Metropolis sweeps after burn-in; the state after the last one is returned.
    pub sweeps: usize,
    pub burn_in: usize,
}

impl IsingModel {
    pub fn new(m: usize) -> Result<Self, IsingError> {
        Self::with_schedule(m, DEFAULT_BURN_IN, 1)
    }

    pub fn with_schedule(m: usize, burn_in: usize, sweeps: usize) -> Result<Self, IsingError> {
        if m < 2 {
            return Err(IsingError::SideTooSmall(m));
        }
        if sweeps == 0 {
            return Err(IsingError::NoSweeps);
        }
        Ok(Self { m, sweeps, burn_in })
    }

    pub fn sites(&self) -> usize {
        self.m * self.m
    }

    pub fn max_stat(&self) -> i32 {
        2 * (self.m * self.m) as i32
    }
}

/// A single-spin-flip Metropolis chain targeting p(X | θ).
#[derive(Clone, Debug)]
pub struct IsingChain {
    m: usize,
    spins: Vec<i8>,
    /// Acceptance thresholds on a u32 draw, indexed by (s·h + 4) / 2.
    accept: [u64; 5],
}

impl IsingChain {
    /// Starts from i.i.d. uniform spins.
    pub fn new(m: usize, theta: f64, rng: &mut RngStream) -> Self {
        let spins = (0..m * m)
            .map(|_| if rng.next_u32() & 1 == 0 { -1 } else { 1 })
            .collect();
        Self::from_spins(m, spins, theta)
    }

    pub fn from_spins(m: usize, spins: Vec<i8>, theta: f64) -> Self {
        assert_eq!(spins.len(), m * m);
        let mut accept = [0u64; 5];
        for (k, slot) in accept.iter_mut().enumerate() {
            let sh = 2 * k as i32 - 4;
            // Flipping s changes S* by −2·s·h.
            let p = (theta * f64::from(-2 * sh)).exp().min(1.0);
            *slot = (p * 4_294_967_296.0).ceil() as u64;
        }
        Self { m, spins, accept }
    }

    pub fn spins(&self) -> &[i8] {
        &self.spins
    }

    fn neighbour_sum(&self, site: usize) -> i32 {
        let m = self.m;
        let (r, c) = (site / m, site % m);
        let up = ((r + m - 1) % m) * m + c;
        let down = ((r + 1) % m) * m + c;
        let left = r * m + (c + m - 1) % m;
        let right = r * m + (c + 1) % m;
        i32::from(self.spins[up]) + i32::from(self.spins[down]) + i32::from(self.spins[left]) + i32::from(self.spins[right])
    }

    /// One sweep = m² random-site Metropolis updates.
    pub fn sweep(&mut self, rng: &mut RngStream) {
        let n = self.spins.len() as u64;
        for _ in 0..n {
            let site = ((u64::from(rng.next_u32()) * n) >> 32) as usize;
            let sh = i32::from(self.spins[site]) * self.neighbour_sum(site);
            let threshold = self.accept[((sh + 4) / 2) as usize];
            if threshold > u64::from(u32::MAX) || u64::from(rng.next_u32()) < threshold {
                self.spins[site] = -self.spins[site];
            }
        }
    }

    pub fn sufficient_stat(&self) -> i32 {
        spin_stat(&self.spins, self.m)
    }
}

fn spin_stat(spins: &[i8], m: usize) -> i32 {
    let mut s = 0i32;
    for r in 0..m {
        for c in 0..m {
            let v = i32::from(spins[r * m + c]);
            let right = i32::from(spins[r * m + (c + 1) % m]);
            let down = i32::from(spins[((r + 1) % m) * m + c]);
            s += v * (right + down);
        }
    }
    s
}

impl IsingModel {
    pub fn simulate_spins(&self, theta: f64, rng: &mut RngStream) -> Vec<i8> {
        let mut chain = IsingChain::new(self.m, theta, rng);
        for _ in 0..self.burn_in + self.sweeps {
            chain.sweep(rng);
        }
        chain.spins
    }
}

impl Simulator for IsingModel {
    fn simulate(&self, theta: &ParamVec, rng: &mut RngStream) -> DataVec {
        let spins = self.simulate_spins(theta[0], rng);
        DataVec(spins.into_iter().map(f64::from).collect())
    }

    fn data_dim(&self) -> usize {
        self.sites()
    }

    fn param_dim(&self) -> usize {
        1
    }

    fn is_discrete(&self) -> bool {
        true
    }

    fn tag(&self) -> &'static str {
        "ising"
    }
}

/// Converts a ±1 data vector to spins, checking shape.
pub fn to_spins(x: &DataVec, m: usize) -> Result<Vec<i8>, IsingError> {
    if x.len() != m * m {
        return Err(IsingError::Length { got: x.len(), expected: m * m, m });
    }
    x.0.iter()
        .enumerate()
        .map(|(index, &value)| {
            if value == 1.0 {
                Ok(1)
            } else if value == -1.0 {
                Ok(-1)
            } else {
                Err(IsingError::NotASpin { index, value })
            }
        })
        .collect()
}

/// Side length of a square lattice with `len` sites, if any.
pub fn side_of(len: usize) -> Option<usize> {
    let m = (len as f64).sqrt().round() as usize;
    (m * m == len && m >= 2).then_some(m)
}

/// S*(x): the sum of X_j X_k over toroidal nearest-neighbour edges.
pub fn ising_sufficient_stat(x: &DataVec, m: usize) -> Result<f64, IsingError> {
    let spins = to_spins(x, m)?;
    Ok(f64::from(spin_stat(&spins, m)))
}

/// Exhaustive enumeration of the density of states for m ≤ 4.
#[derive(Clone, Debug)]
pub struct IsingEnumeration {
    m: usize,
    /// Distinct achievable S* values, ascending.
    values: Vec<i32>,
    /// Number of states attaining each value.
    counts: Vec<u64>,
}

impl IsingEnumeration {
    pub fn new(m: usize) -> Result<Self, IsingError> {
        if m < 2 {
            return Err(IsingError::SideTooSmall(m));
        }
        if m > MAX_ENUMERATION_SIDE {
            return Err(IsingError::TooLarge(m));
        }
        let n = m * m;
        let max = 2 * n as i32;
        let mut hist = vec![0u64; (2 * max + 1) as usize];
        let mut spins = vec![0i8; n];
        for code in 0u32..(1u32 << n) {
            for (k, s) in spins.iter_mut().enumerate() {
                *s = if code >> k & 1 == 1 { 1 } else { -1 };
            }
            hist[(spin_stat(&spins, m) + max) as usize] += 1;
        }
        let (values, counts) = hist
            .iter()
            .enumerate()
            .filter(|(_, &c)| c > 0)
            .map(|(i, &c)| (i as i32 - max, c))
            .unzip();
        Ok(Self { m, values, counts })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn values(&self) -> &[i32] {
        &self.values
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn log_partition(&self, theta: f64) -> f64 {
        let terms: Vec<f64> = self
            .values
            .iter()
            .zip(&self.counts)
            .map(|(&s, &c)| (c as f64).ln() + theta * f64::from(s))
            .collect();
        log_sum_exp(&terms)
    }

    /// Exact law of S* under p(· | θ), aligned with [`Self::values`].
    pub fn stat_pmf(&self, theta: f64) -> Vec<f64> {
        let log_z = self.log_partition(theta);
        self.values
            .iter()
            .zip(&self.counts)
            .map(|(&s, &c)| ((c as f64).ln() + theta * f64::from(s) - log_z).exp())
            .collect()
    }

    /// Probability of one particular state.
    pub fn state_prob(&self, spins: &[i8], theta: f64) -> f64 {
        (theta * f64::from(spin_stat(spins, self.m)) - self.log_partition(theta)).exp()
    }

    /// E[θ | S* = s] under an exponential prior, by trapezoid quadrature on `grid`.
    pub fn posterior_mean_given_stat(
        &self,
        s: f64,
        prior: &PriorSpec,
        grid: &[f64],
    ) -> Result<f64, IsingError> {
        self.posterior_moments_given_stat(s, prior, grid).map(|(m, _)| m)
    }

    /// Posterior mean and standard deviation of θ given S* = s.
    pub fn posterior_moments_given_stat(
        &self,
        s: f64,
        prior: &PriorSpec,
        grid: &[f64],
    ) -> Result<(f64, f64), IsingError> {
        if !matches!(prior, PriorSpec::ExponentialRate { .. }) {
            return Err(IsingError::UnsupportedPrior);
        }
        if grid.len() < 2 || grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(IsingError::BadGrid);
        }
        let log_w: Vec<f64> = grid
            .iter()
            .map(|&t| prior.log_density(&[t]) + t * s - self.log_partition(t))
            .collect();
        let top = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let w: Vec<f64> = log_w.iter().map(|&l| (l - top).exp()).collect();
        let (mut m0, mut m1, mut m2) = (0.0, 0.0, 0.0);
        for k in 0..grid.len() - 1 {
            let h = 0.5 * (grid[k + 1] - grid[k]);
            let (a, b) = (grid[k], grid[k + 1]);
            m0 += h * (w[k] + w[k + 1]);
            m1 += h * (w[k] * a + w[k + 1] * b);
            m2 += h * (w[k] * a * a + w[k + 1] * b * b);
        }
        let mean = m1 / m0;
        Ok((mean, (m2 / m0 - mean * mean).max(0.0).sqrt()))
    }

    /// Posterior mean for every achievable S*, aligned with [`Self::values`].
    pub fn posterior_mean_table(&self, prior: &PriorSpec, grid: &[f64]) -> Result<Vec<f64>, IsingError> {
        self.values
            .iter()
            .map(|&s| self.posterior_mean_given_stat(f64::from(s), prior, grid))
            .collect()
    }
}

/// Uniform quadrature grid on [0, 40 / rate] with 8001 nodes; the prior
/// tail beyond it is below e^-40.
pub fn default_theta_grid(prior: &PriorSpec) -> Vec<f64> {
    let upper = match *prior {
        PriorSpec::ExponentialRate { rate } => 40.0 / rate,
        PriorSpec::UniformTriangleMA2 => 1.0,
    };
    let n = 8001;
    (0..n).map(|k| upper * k as f64 / (n - 1) as f64).collect()
}

/// E_π[θ | X = x] computed exactly by enumeration and quadrature.
pub fn ising_exact_posterior_mean(
    x: &DataVec,
    prior: &PriorSpec,
    m: usize,
    theta_grid: &[f64],
) -> Result<f64, IsingError> {
    if m > MAX_ENUMERATION_SIDE {
        return Err(IsingError::TooLarge(m));
    }
    let s = ising_sufficient_stat(x, m)?;
    IsingEnumeration::new(m)?.posterior_mean_given_stat(s, prior, theta_grid)
}

pub(crate) fn log_sum_exp(xs: &[f64]) -> f64 {
    let top = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if top == f64::NEG_INFINITY {
        return top;
    }
    top + xs.iter().map(|&x| (x - top).exp()).sum::<f64>().ln()
}

/// Draws a uniformly random ±1 state; used for property tests and demos.
pub fn random_state(m: usize, rng: &mut RngStream) -> DataVec {
    DataVec((0..m * m).map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 }).collect())
}
