//! Gaussian MA(2) process X_j = Z_j + θ1 Z_{j−1} + θ2 Z_{j−2}.

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::Simulator;
use crate::eval::PosteriorMoments;
use crate::prior::in_ma2_triangle;
use crate::rng::RngStream;
use crate::types::{DataVec, ParamVec};

pub const DEFAULT_GRID_RESOLUTION: usize = 200;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum Ma2Error {
    #[error("series length must be at least 3, got {0}")]
    TooShort(usize),
    #[error("theta ({0}, {1}) lies outside the identifiability triangle")]
    OutsideSupport(f64, f64),
    #[error("covariance not positive definite at theta ({theta1}, {theta2}), pivot {pivot}")]
    NotPositiveDefinite { theta1: f64, theta2: f64, pivot: usize },
    #[error("grid resolution must be at least 50, got {0}")]
    Resolution(usize),
    #[error("expected a 2-vector theta, got length {0}")]
    ThetaDim(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ma2Model {
    pub p: usize,
}

impl Ma2Model {
    pub fn new(p: usize) -> Result<Self, Ma2Error> {
        if p < 3 {
            return Err(Ma2Error::TooShort(p));
        }
        Ok(Self { p })
    }
}

impl Simulator for Ma2Model {
    fn simulate(&self, theta: &ParamVec, rng: &mut RngStream) -> DataVec {
        let (t1, t2) = (theta[0], theta[1]);
        // z[k] holds Z_{k-1}, k = 0..p+2, i.e. Z_{-1} .. Z_p.
        let z: Vec<f64> = (0..self.p + 2).map(|_| StandardNormal.sample(rng)).collect();
        DataVec(
            (0..self.p)
                .map(|j| z[j + 2] + t1 * z[j + 1] + t2 * z[j])
                .collect(),
        )
    }

    fn data_dim(&self) -> usize {
        self.p
    }

    fn param_dim(&self) -> usize {
        2
    }

    fn is_discrete(&self) -> bool {
        false
    }

    fn tag(&self) -> &'static str {
        "ma2"
    }
}

/// Lag-1 and lag-2 sample autocovariances without mean-centering:
/// AC1 = Σ X_j X_{j+1} / (p − 1), AC2 = Σ X_j X_{j+2} / (p − 2).
pub fn ma2_autocovariance(x: &DataVec) -> (f64, f64) {
    let v = x.as_slice();
    let p = v.len();
    assert!(p >= 3, "autocovariance needs p >= 3");
    let ac1 = v.windows(2).map(|w| w[0] * w[1]).sum::<f64>() / (p - 1) as f64;
    let ac2 = v.windows(3).map(|w| w[0] * w[2]).sum::<f64>() / (p - 2) as f64;
    (ac1, ac2)
}

/// Autocovariances (γ0, γ1, γ2) of the process at θ.
pub fn ma2_gammas(t1: f64, t2: f64) -> (f64, f64, f64) {
    (1.0 + t1 * t1 + t2 * t2, t1 + t1 * t2, t2)
}

/// Exact log N(0, Σ(θ)) density of `x`, via a bandwidth-2 Cholesky
/// factorization of the Toeplitz covariance in O(p).
pub fn ma2_loglikelihood(x: &DataVec, theta: &ParamVec) -> Result<f64, Ma2Error> {
    if theta.len() != 2 {
        return Err(Ma2Error::ThetaDim(theta.len()));
    }
    let (t1, t2) = (theta[0], theta[1]);
    if !in_ma2_triangle(t1, t2) {
        return Err(Ma2Error::OutsideSupport(t1, t2));
    }
    banded_loglik(x.as_slice(), t1, t2)
}

fn banded_loglik(x: &[f64], t1: f64, t2: f64) -> Result<f64, Ma2Error> {
    let (g0, g1, g2) = ma2_gammas(t1, t2);
    let p = x.len();
    // Row i of L has entries (a_i, b_i, d_i) at columns i-2, i-1, i.
    let (mut d_prev2, mut d_prev1) = (0.0f64, 0.0f64);
    let mut b_prev1 = 0.0f64;
    let (mut y_prev2, mut y_prev1) = (0.0f64, 0.0f64);
    let mut log_det_half = 0.0;
    let mut quad = 0.0;
    for i in 0..p {
        let a = if i >= 2 { g2 / d_prev2 } else { 0.0 };
        let b = if i >= 1 { (g1 - a * b_prev1) / d_prev1 } else { 0.0 };
        let d2 = g0 - a * a - b * b;
        if !(d2 > 0.0) || !d2.is_finite() {
            return Err(Ma2Error::NotPositiveDefinite { theta1: t1, theta2: t2, pivot: i });
        }
        let d = d2.sqrt();
        let y = (x[i] - a * y_prev2 - b * y_prev1) / d;
        log_det_half += d.ln();
        quad += y * y;
        d_prev2 = d_prev1;
        d_prev1 = d;
        b_prev1 = b;
        y_prev2 = y_prev1;
        y_prev1 = y;
    }
    Ok(-0.5 * p as f64 * (2.0 * std::f64::consts::PI).ln() - log_det_half - 0.5 * quad)
}

/// Exact posterior under the uniform triangle prior, tabulated on a grid.
///
/// The bounding box [−2, 2] × [−1, 1] is cut into `resolution` cells per
/// axis. Each cell is clipped to the triangle; its mass is the clipped area
/// times the likelihood at the clipped centroid. Cells outside the support
/// carry `-inf` log posterior and zero mass.
#[derive(Clone, Debug)]
pub struct Ma2PosteriorGrid {
    pub grid_resolution: usize,
    /// Row-major `[row θ2][col θ1]`, unnormalized log posterior density.
    pub log_posterior: Vec<f64>,
    /// Normalized cell masses, same layout.
    pub mass: Vec<f64>,
    /// Clipped-cell centroids, same layout (NaN outside the support).
    pub nodes: Vec<(f64, f64)>,
    /// Log of the normalizing constant Σ area·likelihood.
    pub normalization: f64,
}

impl Ma2PosteriorGrid {
    pub fn cell_edges(&self) -> (Vec<f64>, Vec<f64>) {
        let r = self.grid_resolution;
        let xs = (0..=r).map(|i| -2.0 + 4.0 * i as f64 / r as f64).collect();
        let ys = (0..=r).map(|j| -1.0 + 2.0 * j as f64 / r as f64).collect();
        (xs, ys)
    }

    pub fn total_mass(&self) -> f64 {
        self.mass.iter().sum()
    }

    pub fn moments(&self) -> PosteriorMoments {
        let mut m = [0.0; 2];
        for (&w, &(a, b)) in self.mass.iter().zip(&self.nodes) {
            if w > 0.0 {
                m[0] += w * a;
                m[1] += w * b;
            }
        }
        let (mut v1, mut v2, mut c12) = (0.0, 0.0, 0.0);
        for (&w, &(a, b)) in self.mass.iter().zip(&self.nodes) {
            if w > 0.0 {
                v1 += w * (a - m[0]).powi(2);
                v2 += w * (b - m[1]).powi(2);
                c12 += w * (a - m[0]) * (b - m[1]);
            }
        }
        let cor = if v1 > 0.0 && v2 > 0.0 { Some(c12 / (v1 * v2).sqrt()) } else { None };
        PosteriorMoments {
            mean: ParamVec(m.to_vec()),
            std: vec![v1.sqrt(), v2.sqrt()],
            cor,
        }
    }
}

/// Clips the axis-aligned rectangle to the triangle and returns
/// `(area, centroid)`; area 0 when they do not overlap.
fn clip_cell(x0: f64, x1: f64, y0: f64, y1: f64) -> (f64, (f64, f64)) {
    let mut poly = vec![(x0, y0), (x1, y0), (x1, y1), (x0, y1)];
    // Half-planes θ2 + θ1 + 1 ≥ 0 and θ2 − θ1 + 1 ≥ 0.
    for (a, b) in [(1.0, 1.0), (-1.0, 1.0)] {
        let f = |p: (f64, f64)| a * p.0 + b * p.1 + 1.0;
        let mut out = Vec::with_capacity(poly.len() + 1);
        for k in 0..poly.len() {
            let cur = poly[k];
            let next = poly[(k + 1) % poly.len()];
            let (fc, fnx) = (f(cur), f(next));
            if fc >= 0.0 {
                out.push(cur);
            }
            if (fc >= 0.0) != (fnx >= 0.0) {
                let t = fc / (fc - fnx);
                out.push((cur.0 + t * (next.0 - cur.0), cur.1 + t * (next.1 - cur.1)));
            }
        }
        poly = out;
        if poly.len() < 3 {
            return (0.0, (f64::NAN, f64::NAN));
        }
    }
    let (mut area2, mut cx, mut cy) = (0.0, 0.0, 0.0);
    for k in 0..poly.len() {
        let (xa, ya) = poly[k];
        let (xb, yb) = poly[(k + 1) % poly.len()];
        let cross = xa * yb - xb * ya;
        area2 += cross;
        cx += (xa + xb) * cross;
        cy += (ya + yb) * cross;
    }
    if area2 <= 0.0 {
        return (0.0, (f64::NAN, f64::NAN));
    }
    (area2 / 2.0, (cx / (3.0 * area2), cy / (3.0 * area2)))
}

pub fn ma2_exact_posterior(x: &DataVec, resolution: usize) -> Result<Ma2PosteriorGrid, Ma2Error> {
    if resolution < 50 {
        return Err(Ma2Error::Resolution(resolution));
    }
    if x.len() < 3 {
        return Err(Ma2Error::TooShort(x.len()));
    }
    let r = resolution;
    let (hx, hy) = (4.0 / r as f64, 2.0 / r as f64);
    let mut log_posterior = vec![f64::NEG_INFINITY; r * r];
    let mut nodes = vec![(f64::NAN, f64::NAN); r * r];
    let mut log_mass = vec![f64::NEG_INFINITY; r * r];
    for j in 0..r {
        let y0 = -1.0 + j as f64 * hy;
        for i in 0..r {
            let x0 = -2.0 + i as f64 * hx;
            let (area, (c1, c2)) = clip_cell(x0, x0 + hx, y0, y0 + hy);
            if area <= 0.0 {
                continue;
            }
            let ll = banded_loglik(x.as_slice(), c1, c2)?;
            let k = j * r + i;
            log_posterior[k] = ll - (4.0f64).ln();
            nodes[k] = (c1, c2);
            log_mass[k] = ll + area.ln();
        }
    }
    let normalization = super::ising::log_sum_exp(&log_mass);
    let mass = log_mass.iter().map(|&l| (l - normalization).exp()).collect();
    Ok(Ma2PosteriorGrid {
        grid_resolution: r,
        log_posterior,
        mass,
        nodes,
        normalization,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prior::PriorSpec;
    use proptest::prelude::*;

    /// Dense route: build Σ explicitly, factor with a textbook Cholesky and
    /// evaluate the Gaussian log density.
    fn dense_loglik(x: &[f64], t1: f64, t2: f64) -> f64 {
        let p = x.len();
        let (g0, g1, g2) = ma2_gammas(t1, t2);
        let mut s = vec![vec![0.0; p]; p];
        for i in 0..p {
            for j in 0..p {
                s[i][j] = match i.abs_diff(j) {
                    0 => g0,
                    1 => g1,
                    2 => g2,
                    _ => 0.0,
                };
            }
        }
        let mut l = vec![vec![0.0; p]; p];
        for i in 0..p {
            for j in 0..=i {
                let mut acc = s[i][j];
                for k in 0..j {
                    acc -= l[i][k] * l[j][k];
                }
                l[i][j] = if i == j { acc.sqrt() } else { acc / l[j][j] };
            }
        }
        let mut y = vec![0.0; p];
        for i in 0..p {
            let mut acc = x[i];
            for k in 0..i {
                acc -= l[i][k] * y[k];
            }
            y[i] = acc / l[i][i];
        }
        let log_det: f64 = (0..p).map(|i| 2.0 * l[i][i].ln()).sum();
        -0.5 * (p as f64 * (2.0 * std::f64::consts::PI).ln() + log_det + y.iter().map(|v| v * v).sum::<f64>())
    }

    fn sim(theta: [f64; 2], p: usize, seed: u64) -> DataVec {
        Ma2Model::new(p).unwrap().simulate(&ParamVec(theta.to_vec()), &mut RngStream::new(seed, 0))
    }

    #[test]
    fn autocovariance_examples() {
        assert_eq!(ma2_autocovariance(&DataVec(vec![0.0; 10])), (0.0, 0.0));
        assert_eq!(ma2_autocovariance(&DataVec(vec![1.0; 100])), (1.0, 1.0));
        let alt = DataVec((0..100).map(|j| if j % 2 == 0 { 1.0 } else { -1.0 }).collect());
        assert_eq!(ma2_autocovariance(&alt), (-1.0, 1.0));
    }

    #[test]
    fn autocovariance_limits_long_series() {
        let (ac1, ac2) = ma2_autocovariance(&sim([0.6, 0.2], 100_000, 1));
        assert!((ac1 - 0.72).abs() < 0.02, "ac1 {ac1}");
        assert!((ac2 - 0.2).abs() < 0.02, "ac2 {ac2}");
        let (w1, w2) = ma2_autocovariance(&sim([0.0, 0.0], 100_000, 2));
        assert!(w1.abs() < 0.02 && w2.abs() < 0.02);
    }

    #[test]
    fn marginal_variance() {
        let (t1, t2) = (0.6, 0.2);
        let n = 100_000;
        let model = Ma2Model::new(3).unwrap();
        let mut acc = 0.0;
        let mut acc2 = 0.0;
        for i in 0..n {
            let x = model.simulate(&ParamVec(vec![t1, t2]), &mut RngStream::new(3, i));
            acc += x[2] * x[2];
            acc2 += x[2].powi(4);
        }
        let mean = acc / n as f64;
        let target = 1.0 + t1 * t1 + t2 * t2;
        let se = ((acc2 / n as f64 - mean * mean) / n as f64).sqrt();
        assert!((mean - target).abs() < 3.0 * se, "{mean} vs {target} (se {se})");
    }

    #[test]
    fn ac1_mean_over_replicates() {
        let (t1, t2) = (0.6, 0.2);
        let model = Ma2Model::new(100).unwrap();
        let vals: Vec<f64> = (0..10_000)
            .map(|i| ma2_autocovariance(&model.simulate(&ParamVec(vec![t1, t2]), &mut RngStream::new(4, i))).0)
            .collect();
        let n = vals.len() as f64;
        let mean = vals.iter().sum::<f64>() / n;
        let sd = (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        assert!((mean - (t1 + t1 * t2)).abs() < 3.0 * sd / n.sqrt());
    }

    #[test]
    fn white_noise_loglik() {
        let x = sim([0.3, 0.1], 20, 5);
        let ll = ma2_loglikelihood(&x, &ParamVec(vec![0.0, 0.0])).unwrap();
        let expect = -10.0 * (2.0 * std::f64::consts::PI).ln() - 0.5 * x.0.iter().map(|v| v * v).sum::<f64>();
        assert!((ll - expect).abs() < 1e-12);
    }

    #[test]
    fn p3_matches_dense() {
        let x = DataVec(vec![0.3, -1.2, 0.8]);
        let ll = ma2_loglikelihood(&x, &ParamVec(vec![0.6, 0.2])).unwrap();
        assert!((ll - dense_loglik(&x.0, 0.6, 0.2)).abs() < 1e-12);
    }

    #[test]
    fn banded_matches_dense_random_thetas() {
        let mut rng = RngStream::new(6, 0);
        for k in 0..100 {
            let theta = PriorSpec::UniformTriangleMA2.sample(&mut rng);
            let p = 3 + (k % 48);
            let x = sim([theta[0], theta[1]], p, 100 + k as u64);
            let a = ma2_loglikelihood(&x, &theta).unwrap();
            let b = dense_loglik(&x.0, theta[0], theta[1]);
            assert!((a - b).abs() < 1e-8, "theta {theta:?} p {p}: {a} vs {b}");
        }
    }

    proptest! {
        #[test]
        fn reversal_invariance(seed in any::<u64>(), p in 3usize..60) {
            let mut rng = RngStream::new(seed, 1);
            let theta = PriorSpec::UniformTriangleMA2.sample(&mut rng);
            let x = sim([theta[0], theta[1]], p, seed);
            let rev = DataVec(x.0.iter().rev().copied().collect());
            let a = ma2_loglikelihood(&x, &theta).unwrap();
            let b = ma2_loglikelihood(&rev, &theta).unwrap();
            prop_assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn boundary_and_outside() {
        let x = sim([0.6, 0.2], 50, 7);
        for t in [[2.0, 1.0], [-2.0, 1.0], [0.0, -1.0]] {
            assert!(ma2_loglikelihood(&x, &ParamVec(t.to_vec())).unwrap().is_finite());
        }
        assert!(matches!(
            ma2_loglikelihood(&x, &ParamVec(vec![1.0, -0.5])),
            Err(Ma2Error::OutsideSupport(..))
        ));
    }

    #[test]
    fn clipped_cells_tile_the_triangle() {
        let r = 64;
        let (hx, hy) = (4.0 / r as f64, 2.0 / r as f64);
        let mut total = 0.0;
        for j in 0..r {
            for i in 0..r {
                let x0 = -2.0 + i as f64 * hx;
                let y0 = -1.0 + j as f64 * hy;
                let (a, c) = clip_cell(x0, x0 + hx, y0, y0 + hy);
                if a > 0.0 {
                    assert!(in_ma2_triangle(c.0, c.1) || (c.1 + c.0 + 1.0).abs() < 1e-12 || (c.1 - c.0 + 1.0).abs() < 1e-12);
                }
                total += a;
            }
        }
        assert!((total - 4.0).abs() < 1e-12);
    }

    #[test]
    fn posterior_grid_normalizes_and_refines() {
        let x = sim([0.6, 0.2], 100, 8);
        let g = ma2_exact_posterior(&x, 200).unwrap();
        assert!((g.total_mass() - 1.0).abs() < 1e-6);
        let fine = ma2_exact_posterior(&x, 400).unwrap();
        let (a, b) = (g.moments(), fine.moments());
        for k in 0..2 {
            assert!((a.mean[k] - b.mean[k]).abs() < 1e-3);
            assert!((a.std[k] - b.std[k]).abs() < 1e-3);
        }
        assert!((a.cor.unwrap() - b.cor.unwrap()).abs() < 1e-3);
        assert_eq!(ma2_exact_posterior(&x, 10).unwrap_err(), Ma2Error::Resolution(10));
    }
}
