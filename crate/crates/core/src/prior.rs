//! The two priors used by the experiments.

use rand::Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use crate::rng::RngStream;
use crate::types::ParamVec;

/// Critical inverse temperature of the infinite square-lattice Ising model.
pub const ISING_CRITICAL_THETA: f64 = 0.4406;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PriorSpec {
    /// Exponential law on θ ≥ 0 with the given rate (mean `1 / rate`).
    ExponentialRate { rate: f64 },
    /// Uniform on the MA(2) identifiability triangle with vertices
    /// (−2, 1), (2, 1), (0, −1).
    UniformTriangleMA2,
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum PriorError {
    #[error("exponential rate must be positive and finite, got {0}")]
    InvalidRate(f64),
}

impl PriorSpec {
    pub fn exponential(rate: f64) -> Result<Self, PriorError> {
        let p = PriorSpec::ExponentialRate { rate };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), PriorError> {
        match *self {
            PriorSpec::ExponentialRate { rate } if !(rate > 0.0 && rate.is_finite()) => {
                Err(PriorError::InvalidRate(rate))
            }
            _ => Ok(()),
        }
    }

    /// Parameter dimension q.
    pub fn dim(&self) -> usize {
        match self {
            PriorSpec::ExponentialRate { .. } => 1,
            PriorSpec::UniformTriangleMA2 => 2,
        }
    }

    pub fn mean(&self) -> ParamVec {
        match *self {
            PriorSpec::ExponentialRate { rate } => ParamVec(vec![1.0 / rate]),
            PriorSpec::UniformTriangleMA2 => ParamVec(vec![0.0, 1.0 / 3.0]),
        }
    }

    pub fn contains(&self, theta: &[f64]) -> bool {
        match self {
            PriorSpec::ExponentialRate { .. } => theta.len() == 1 && theta[0] >= 0.0,
            PriorSpec::UniformTriangleMA2 => theta.len() == 2 && in_ma2_triangle(theta[0], theta[1]),
        }
    }

    /// Log density; `-inf` outside the support.
    pub fn log_density(&self, theta: &[f64]) -> f64 {
        if !self.contains(theta) {
            return f64::NEG_INFINITY;
        }
        match *self {
            PriorSpec::ExponentialRate { rate } => rate.ln() - rate * theta[0],
            PriorSpec::UniformTriangleMA2 => -(4.0f64).ln(),
        }
    }

    pub fn sample(&self, rng: &mut RngStream) -> ParamVec {
        match *self {
            PriorSpec::ExponentialRate { rate } => {
                let d = Exp::new(rate).expect("validated rate");
                ParamVec(vec![d.sample(rng)])
            }
            PriorSpec::UniformTriangleMA2 => {
                // Rejection from the bounding box; acceptance probability 1/2.
                loop {
                    let t1 = rng.random_range(-2.0..2.0);
                    let t2 = rng.random_range(-1.0..1.0);
                    if in_ma2_triangle(t1, t2) {
                        return ParamVec(vec![t1, t2]);
                    }
                }
            }
        }
    }
}

pub fn draw_prior(prior: &PriorSpec, rng: &mut RngStream) -> ParamVec {
    prior.sample(rng)
}

pub fn in_ma2_triangle(t1: f64, t2: f64) -> bool {
    (-2.0..=2.0).contains(&t1) && (-1.0..=1.0).contains(&t2) && t2 + t1 >= -1.0 && t2 - t1 >= -1.0
}
