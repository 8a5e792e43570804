//! ABC rejection samplers: exact matching for discrete models and
//! tolerance-based acceptance on summary statistics.

use std::collections::HashMap;
use std::fmt;
use std::io::Write;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::models::ising::{ising_sufficient_stat, IsingEnumeration, IsingError};
use crate::models::ma2::ma2_autocovariance;
use crate::models::Simulator;
use crate::nn::{MlpModel, NnError};
use crate::prior::PriorSpec;
use crate::rng::{derive_seed, lane, RngStream};
use crate::semiauto::{LinearSummary, SemiautoError};
use crate::types::{DataVec, ParamVec};

#[derive(Debug, thiserror::Error)]
pub enum AbcError {
    #[error("n_proposals must be at least 1")]
    NoProposals,
    #[error("quantile fraction must lie in (0, 1], got {0}")]
    Fraction(f64),
    #[error("tolerance must be nonnegative, got {0}")]
    Epsilon(f64),
    #[error("summary vectors differ in length ({0} vs {1})")]
    DistanceLength(usize, usize),
    #[error("standardized distance needs {expected} positive scales, got {got:?}")]
    Scale { expected: usize, got: Vec<f64> },
    #[error("exact matching requires a discrete model; '{0}' has continuous data")]
    ContinuousModel(&'static str),
    #[error("observed data has {got} entries, model produces {expected}")]
    ObservedDim { got: usize, expected: usize },
    #[error(
        "proposal budget exceeded: {n_accepted} of {n_target} accepted after {n_proposed} proposals \
         (projected {projected:.3e}, budget {budget})"
    )]
    Budget { n_target: usize, n_accepted: usize, n_proposed: usize, projected: f64, budget: usize },
    #[error("no proposal fell within tolerance {epsilon} ({n_proposed} proposals)")]
    NoAcceptance { epsilon: f64, n_proposed: usize },
    #[error("summary returned {got} values, expected {expected}")]
    SummaryDim { got: usize, expected: usize },
    #[error("summary index {0} out of range")]
    SummaryIndex(usize),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Semiauto(#[from] SemiautoError),
    #[error(transparent)]
    Ising(#[from] IsingError),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SummarySource {
    DnnModel,
    LinearSummary,
    IsingSufficient,
    Ma2Autocov,
    Identity,
    ExactPosteriorMean,
}

impl fmt::Display for SummarySource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = serde_json::to_value(self).expect("unit variant");
        f.write_str(s.as_str().expect("string"))
    }
}

/// A deterministic map from data to a fixed-length vector.
pub trait SummaryStatistic: Sync {
    fn dim(&self) -> usize;

    fn evaluate(&self, x: &DataVec) -> Result<Vec<f64>, AbcError>;

    fn evaluate_batch(&self, xs: &[&DataVec]) -> Result<Vec<Vec<f64>>, AbcError> {
        xs.iter().map(|x| self.evaluate(x)).collect()
    }

    fn source(&self) -> SummarySource;
}

fn stack(xs: &[&DataVec]) -> Array2<f64> {
    let p = xs.first().map_or(0, |x| x.len());
    let mut flat = Vec::with_capacity(xs.len() * p);
    for x in xs {
        flat.extend_from_slice(x.as_slice());
    }
    Array2::from_shape_vec((xs.len(), p), flat).expect("ragged batch")
}

fn rows(a: Array2<f64>) -> Vec<Vec<f64>> {
    a.rows().into_iter().map(|r| r.to_vec()).collect()
}

impl SummaryStatistic for MlpModel {
    fn dim(&self) -> usize {
        self.output_dim()
    }

    fn evaluate(&self, x: &DataVec) -> Result<Vec<f64>, AbcError> {
        Ok(self.forward(x)?.0)
    }

    fn evaluate_batch(&self, xs: &[&DataVec]) -> Result<Vec<Vec<f64>>, AbcError> {
        if xs.iter().any(|x| x.len() != self.input_dim()) {
            let bad = xs.iter().find(|x| x.len() != self.input_dim()).unwrap();
            return Err(NnError::InputDim { got: bad.len(), expected: self.input_dim() }.into());
        }
        let mut out = Vec::with_capacity(xs.len());
        for chunk in xs.chunks(1024) {
            out.extend(rows(self.forward_batch(stack(chunk).view())?));
        }
        Ok(out)
    }

    fn source(&self) -> SummarySource {
        SummarySource::DnnModel
    }
}

impl SummaryStatistic for LinearSummary {
    fn dim(&self) -> usize {
        self.output_dim()
    }

    fn evaluate(&self, x: &DataVec) -> Result<Vec<f64>, AbcError> {
        Ok(self.predict(x)?.0)
    }

    fn evaluate_batch(&self, xs: &[&DataVec]) -> Result<Vec<Vec<f64>>, AbcError> {
        if let Some(bad) = xs.iter().find(|x| x.len() != self.input_dim) {
            return Err(SemiautoError::InputDim { got: bad.len(), expected: self.input_dim }.into());
        }
        let mut out = Vec::with_capacity(xs.len());
        for chunk in xs.chunks(1024) {
            out.extend(rows(self.predict_batch(stack(chunk).view())?));
        }
        Ok(out)
    }

    fn source(&self) -> SummarySource {
        SummarySource::LinearSummary
    }
}

/// S*(x) for an m×m lattice.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct IsingSufficient {
    pub m: usize,
}

impl SummaryStatistic for IsingSufficient {
    fn dim(&self) -> usize {
        1
    }

    fn evaluate(&self, x: &DataVec) -> Result<Vec<f64>, AbcError> {
        Ok(vec![ising_sufficient_stat(x, self.m)?])
    }

    fn source(&self) -> SummarySource {
        SummarySource::IsingSufficient
    }
}

/// Lag-1 and lag-2 sample autocovariances.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Ma2Autocov;

impl SummaryStatistic for Ma2Autocov {
    fn dim(&self) -> usize {
        2
    }

    fn evaluate(&self, x: &DataVec) -> Result<Vec<f64>, AbcError> {
        let (a1, a2) = ma2_autocovariance(x);
        Ok(vec![a1, a2])
    }

    fn source(&self) -> SummarySource {
        SummarySource::Ma2Autocov
    }
}

/// The data itself.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Identity {
    pub dim: usize,
}

impl SummaryStatistic for Identity {
    fn dim(&self) -> usize {
        self.dim
    }

    fn evaluate(&self, x: &DataVec) -> Result<Vec<f64>, AbcError> {
        if x.len() != self.dim {
            return Err(AbcError::ObservedDim { got: x.len(), expected: self.dim });
        }
        Ok(x.0.clone())
    }

    fn source(&self) -> SummarySource {
        SummarySource::Identity
    }
}

/// E[θ | X] on a small Ising lattice, tabulated by S* from the enumeration oracle.
#[derive(Clone, Debug, PartialEq)]
pub struct IsingPosteriorMeanSummary {
    pub m: usize,
    table: HashMap<i32, f64>,
}

impl IsingPosteriorMeanSummary {
    pub fn new(m: usize, prior: &PriorSpec, theta_grid: &[f64]) -> Result<Self, IsingError> {
        let en = IsingEnumeration::new(m)?;
        let means = en.posterior_mean_table(prior, theta_grid)?;
        Ok(Self { m, table: en.values().iter().copied().zip(means).collect() })
    }

    pub fn table(&self) -> &HashMap<i32, f64> {
        &self.table
    }
}

impl SummaryStatistic for IsingPosteriorMeanSummary {
    fn dim(&self) -> usize {
        1
    }

    fn evaluate(&self, x: &DataVec) -> Result<Vec<f64>, AbcError> {
        let s = ising_sufficient_stat(x, self.m)? as i32;
        Ok(vec![self.table[&s]])
    }

    fn source(&self) -> SummarySource {
        SummarySource::ExactPosteriorMean
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AcceptanceMode {
    /// Accept every proposal with distance < ε; ε = 0 means an exact
    /// summary match.
    FixedEpsilon { epsilon: f64 },
    /// Accept the ⌈fraction · n_proposals⌉ closest proposals.
    Quantile { fraction: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistanceMode {
    Euclidean,
    StandardizedEuclidean,
}

impl DistanceMode {
    /// Standardized for vector summaries, plain for scalars.
    pub fn default_for(dim: usize) -> Self {
        if dim > 1 { DistanceMode::StandardizedEuclidean } else { DistanceMode::Euclidean }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AbcConfig {
    pub n_proposals: usize,
    pub acceptance_mode: AcceptanceMode,
    pub distance: DistanceMode,
    pub seed: u64,
}

impl Default for AbcConfig {
    fn default() -> Self {
        Self {
            n_proposals: 1_000_000,
            acceptance_mode: AcceptanceMode::Quantile { fraction: 0.001 },
            distance: DistanceMode::StandardizedEuclidean,
            seed: 0,
        }
    }
}

impl AbcConfig {
    pub fn validate(&self) -> Result<(), AbcError> {
        if self.n_proposals == 0 {
            return Err(AbcError::NoProposals);
        }
        self.acceptance_mode.validate()
    }
}

impl AcceptanceMode {
    pub fn validate(&self) -> Result<(), AbcError> {
        match *self {
            AcceptanceMode::FixedEpsilon { epsilon } if !(epsilon >= 0.0) => Err(AbcError::Epsilon(epsilon)),
            AcceptanceMode::Quantile { fraction } if !(fraction > 0.0 && fraction <= 1.0) => {
                Err(AbcError::Fraction(fraction))
            }
            _ => Ok(()),
        }
    }
}

/// Number of draws kept in quantile mode: ⌈fraction · n⌉, at least one.
pub fn quantile_count(fraction: f64, n: usize) -> usize {
    // Guard against 0.001 · 10^6 landing one ulp above an integer.
    let k = (fraction * n as f64 * (1.0 - 4.0 * f64::EPSILON)).ceil() as usize;
    k.clamp(1, n)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AbcResult {
    pub accepted: Vec<ParamVec>,
    pub realized_epsilon: f64,
    pub n_proposed: usize,
    pub n_accepted: usize,
    /// Distances of the accepted draws, aligned with `accepted`.
    pub distances: Vec<f64>,
    /// Proposal indices of the accepted draws, increasing.
    pub indices: Vec<usize>,
}

impl AbcResult {
    pub fn empty() -> Self {
        Self {
            accepted: Vec::new(),
            realized_epsilon: 0.0,
            n_proposed: 0,
            n_accepted: 0,
            distances: Vec::new(),
            indices: Vec::new(),
        }
    }

    pub fn acceptance_rate(&self) -> f64 {
        if self.n_proposed == 0 { 0.0 } else { self.n_accepted as f64 / self.n_proposed as f64 }
    }

    /// One accepted draw per row: proposal index, θ components, distance.
    pub fn write_csv<W: Write>(&self, mut w: W, comment: Option<&str>) -> Result<(), AbcError> {
        if let Some(c) = comment {
            writeln!(w, "# {c}")?;
        }
        let q = self.accepted.first().map_or(0, |t| t.len());
        let mut header = vec!["proposal".to_owned()];
        header.extend((1..=q).map(|c| if q == 1 { "theta".to_owned() } else { format!("theta{c}") }));
        header.push("distance".into());
        writeln!(w, "{}", header.join(","))?;
        for ((t, d), i) in self.accepted.iter().zip(&self.distances).zip(&self.indices) {
            let mut line = i.to_string();
            for v in &t.0 {
                line.push_str(&format!(",{v}"));
            }
            line.push_str(&format!(",{d}"));
            writeln!(w, "{line}")?;
        }
        Ok(())
    }

    pub fn save(&self, csv_path: impl AsRef<Path>, sidecar: &AbcSidecar) -> Result<(), AbcError> {
        let csv_path = csv_path.as_ref();
        let comment = sidecar.comment();
        let mut f = std::io::BufWriter::new(std::fs::File::create(csv_path)?);
        self.write_csv(&mut f, Some(&comment))?;
        f.flush()?;
        let json = serde_json::to_string_pretty(sidecar).expect("serializable");
        std::fs::write(sidecar_path(csv_path), json + "\n")?;
        Ok(())
    }
}

/// `draws.csv` → `draws.json`.
pub fn sidecar_path(csv_path: &Path) -> std::path::PathBuf {
    csv_path.with_extension("json")
}

/// Run metadata written next to the accepted-draw CSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AbcSidecar {
    pub realized_epsilon: Option<f64>,
    pub n_proposed: usize,
    pub n_accepted: usize,
    pub acceptance_mode: Option<AcceptanceMode>,
    pub distance: Option<DistanceMode>,
    pub summary: Option<SummarySource>,
    pub seed: u64,
    pub config_hash: Option<String>,
}

impl AbcSidecar {
    pub fn new(result: &AbcResult, cfg: Option<&AbcConfig>, summary: Option<SummarySource>, seed: u64) -> Self {
        Self {
            realized_epsilon: result.realized_epsilon.is_finite().then_some(result.realized_epsilon),
            n_proposed: result.n_proposed,
            n_accepted: result.n_accepted,
            acceptance_mode: cfg.map(|c| c.acceptance_mode),
            distance: cfg.map(|c| c.distance),
            summary,
            seed,
            config_hash: None,
        }
    }

    pub fn comment(&self) -> String {
        format!("config_hash={}, seed={}", self.config_hash.as_deref().unwrap_or("none"), self.seed)
    }
}

/// ℓ2 distance, optionally after dividing each component by `scale`.
pub fn distance(a: &[f64], b: &[f64], mode: DistanceMode, scale: Option<&[f64]>) -> Result<f64, AbcError> {
    if a.len() != b.len() {
        return Err(AbcError::DistanceLength(a.len(), b.len()));
    }
    match mode {
        DistanceMode::Euclidean => Ok(a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()),
        DistanceMode::StandardizedEuclidean => {
            let s = scale.filter(|s| s.len() == a.len() && s.iter().all(|&v| v > 0.0)).ok_or_else(|| {
                AbcError::Scale { expected: a.len(), got: scale.map(<[f64]>::to_vec).unwrap_or_default() }
            })?;
            Ok(a.iter().zip(b).zip(s).map(|((x, y), s)| ((x - y) / s).powi(2)).sum::<f64>().sqrt())
        }
    }
}

#[cfg(feature = "parallel")]
fn par_map<T: Send, F: Fn(usize) -> T + Sync + Send>(range: std::ops::Range<usize>, f: F) -> Vec<T> {
    use rayon::prelude::*;
    range.into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
fn par_map<T: Send, F: Fn(usize) -> T + Sync + Send>(range: std::ops::Range<usize>, f: F) -> Vec<T> {
    range.map(f).collect()
}

/// The RNG for proposal `index` of a run seeded with `seed`.
pub fn proposal_rng(seed: u64, index: usize) -> RngStream {
    RngStream::new(derive_seed(seed, lane::ABC), index as u64)
}

const POOL_CHUNK: usize = 4096;

/// Proposals (θ', S(X')) simulated once and shared across tolerances,
/// observations and summaries.
#[derive(Clone, Debug, PartialEq)]
pub struct ProposalPool {
    /// Proposal index of each row; ties are broken by this id.
    pub ids: Vec<usize>,
    pub thetas: Vec<ParamVec>,
    /// One `n × dim` matrix per summary.
    pub stats: Vec<Array2<f64>>,
    pub seed: u64,
}

impl ProposalPool {
    /// Simulates `n` proposals; proposal i draws θ and X from its own stream,
    /// so the pool does not depend on the thread count.
    pub fn simulate<M: Simulator + ?Sized>(
        prior: &PriorSpec,
        model: &M,
        summaries: &[&dyn SummaryStatistic],
        n: usize,
        seed: u64,
    ) -> Result<Self, AbcError> {
        if n == 0 {
            return Err(AbcError::NoProposals);
        }
        let mut thetas = Vec::with_capacity(n);
        let mut flat: Vec<Vec<f64>> = summaries.iter().map(|s| Vec::with_capacity(n * s.dim())).collect();
        let mut start = 0;
        while start < n {
            let end = (start + POOL_CHUNK).min(n);
            let sims = par_map(start..end, |i| {
                let mut rng = proposal_rng(seed, i);
                let theta = prior.sample(&mut rng);
                let x = model.simulate(&theta, &mut rng);
                (theta, x)
            });
            let xs: Vec<&DataVec> = sims.iter().map(|(_, x)| x).collect();
            for (k, s) in summaries.iter().enumerate() {
                for v in s.evaluate_batch(&xs)? {
                    if v.len() != s.dim() {
                        return Err(AbcError::SummaryDim { got: v.len(), expected: s.dim() });
                    }
                    flat[k].extend(v);
                }
            }
            thetas.extend(sims.into_iter().map(|(t, _)| t));
            start = end;
        }
        let stats = flat
            .into_iter()
            .zip(summaries)
            .map(|(f, s)| Array2::from_shape_vec((n, s.dim()), f).expect("summary dims checked"))
            .collect();
        Ok(Self { ids: (0..n).collect(), thetas, stats, seed })
    }

    pub fn len(&self) -> usize {
        self.thetas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.thetas.is_empty()
    }

    /// Population standard deviation of each component of summary `which`,
    /// accumulated in proposal order so it does not depend on row order.
    pub fn summary_scale(&self, which: usize) -> Result<Vec<f64>, AbcError> {
        let s = self.stats.get(which).ok_or(AbcError::SummaryIndex(which))?;
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.sort_by_key(|&i| self.ids[i]);
        let n = order.len() as f64;
        Ok(s.columns()
            .into_iter()
            .map(|c| {
                let mean = order.iter().map(|&i| c[i]).sum::<f64>() / n;
                let sd = (order.iter().map(|&i| (c[i] - mean).powi(2)).sum::<f64>() / n).sqrt();
                if sd > 0.0 && sd.is_finite() {
                    sd
                } else {
                    log::warn!("summary component has zero spread over the pool; using unit scale");
                    1.0
                }
            })
            .collect())
    }

    /// The same proposals in a different row order.
    pub fn permuted(&self, order: &[usize]) -> Self {
        Self {
            ids: order.iter().map(|&i| self.ids[i]).collect(),
            thetas: order.iter().map(|&i| self.thetas[i].clone()).collect(),
            stats: self.stats.iter().map(|s| s.select(ndarray::Axis(0), order)).collect(),
            seed: self.seed,
        }
    }

    /// Distances from every proposal's summary `which` to `s_obs`.
    pub fn distances(&self, which: usize, s_obs: &[f64], mode: DistanceMode) -> Result<Vec<f64>, AbcError> {
        let s = self.stats.get(which).ok_or(AbcError::SummaryIndex(which))?;
        if s.ncols() != s_obs.len() {
            return Err(AbcError::DistanceLength(s.ncols(), s_obs.len()));
        }
        let scale = match mode {
            DistanceMode::StandardizedEuclidean => Some(self.summary_scale(which)?),
            DistanceMode::Euclidean => None,
        };
        s.rows()
            .into_iter()
            .map(|r| distance(r.as_slice().expect("standard layout"), s_obs, mode, scale.as_deref()))
            .collect()
    }

    /// Applies the acceptance rule to summary `which` against `s_obs`.
    pub fn accept(
        &self,
        which: usize,
        s_obs: &[f64],
        mode: AcceptanceMode,
        dist: DistanceMode,
    ) -> Result<AbcResult, AbcError> {
        mode.validate()?;
        let d = self.distances(which, s_obs, dist)?;
        let n = d.len();
        let (mut chosen, realized_epsilon): (Vec<usize>, f64) = match mode {
            AcceptanceMode::FixedEpsilon { epsilon } => {
                let keep: Vec<usize> = if epsilon == 0.0 {
                    (0..n).filter(|&i| d[i] == 0.0).collect()
                } else {
                    (0..n).filter(|&i| d[i] < epsilon).collect()
                };
                if keep.is_empty() {
                    return Err(AbcError::NoAcceptance { epsilon, n_proposed: n });
                }
                (keep, epsilon)
            }
            AcceptanceMode::Quantile { fraction } => {
                let k = quantile_count(fraction, n);
                let mut order: Vec<usize> = (0..n).collect();
                let key = |i: usize| (d[i], self.ids[i]);
                order.select_nth_unstable_by(k - 1, |&a, &b| {
                    let (da, ia) = key(a);
                    let (db, ib) = key(b);
                    da.total_cmp(&db).then(ia.cmp(&ib))
                });
                order.truncate(k);
                let kth = order.iter().map(|&i| d[i]).fold(f64::NEG_INFINITY, f64::max);
                (order, kth.next_up())
            }
        };
        chosen.sort_by_key(|&i| self.ids[i]);
        Ok(AbcResult {
            accepted: chosen.iter().map(|&i| self.thetas[i].clone()).collect(),
            realized_epsilon,
            n_proposed: n,
            n_accepted: chosen.len(),
            distances: chosen.iter().map(|&i| d[i]).collect(),
            indices: chosen.iter().map(|&i| self.ids[i]).collect(),
        })
    }
}

/// Tolerance-based rejection ABC on a summary statistic.
pub fn abc_reject_summary<M: Simulator + ?Sized>(
    prior: &PriorSpec,
    model: &M,
    summary: &dyn SummaryStatistic,
    x_obs: &DataVec,
    cfg: &AbcConfig,
) -> Result<AbcResult, AbcError> {
    cfg.validate()?;
    if x_obs.len() != model.data_dim() {
        return Err(AbcError::ObservedDim { got: x_obs.len(), expected: model.data_dim() });
    }
    let s_obs = summary.evaluate(x_obs)?;
    if s_obs.len() != summary.dim() {
        return Err(AbcError::SummaryDim { got: s_obs.len(), expected: summary.dim() });
    }
    let pool = ProposalPool::simulate(prior, model, &[summary], cfg.n_proposals, cfg.seed)?;
    pool.accept(0, &s_obs, cfg.acceptance_mode, cfg.distance)
}

/// Default proposal budget for exact matching.
pub const DEFAULT_EXACT_BUDGET: usize = 50_000_000;

/// Exact-match rejection ABC: accepts θ' whenever the simulated data equals
/// `x_obs`. Aborts once the projected number of proposals needed exceeds
/// `budget`.
pub fn abc_reject_exact<M: Simulator + ?Sized>(
    prior: &PriorSpec,
    model: &M,
    x_obs: &DataVec,
    n: usize,
    seed: u64,
    budget: usize,
) -> Result<AbcResult, AbcError> {
    if !model.is_discrete() {
        return Err(AbcError::ContinuousModel(model.tag()));
    }
    if x_obs.len() != model.data_dim() {
        return Err(AbcError::ObservedDim { got: x_obs.len(), expected: model.data_dim() });
    }
    let mut result = AbcResult::empty();
    if n == 0 {
        return Ok(result);
    }
    let mut start = 0;
    while result.n_accepted < n {
        let end = start + POOL_CHUNK;
        let hits = par_map(start..end, |i| {
            let mut rng = proposal_rng(seed, i);
            let theta = prior.sample(&mut rng);
            let x = model.simulate(&theta, &mut rng);
            (x == *x_obs).then_some(theta)
        });
        for (k, hit) in hits.into_iter().enumerate() {
            if let Some(theta) = hit {
                result.accepted.push(theta);
                result.indices.push(start + k);
                result.distances.push(0.0);
                result.n_accepted += 1;
                if result.n_accepted == n {
                    result.n_proposed = start + k + 1;
                    return Ok(result);
                }
            }
        }
        start = end;
        result.n_proposed = start;
        let projected = if result.n_accepted == 0 {
            f64::INFINITY
        } else {
            start as f64 * n as f64 / result.n_accepted as f64
        };
        let informative = result.n_accepted >= 10 || start >= budget;
        if informative && projected > budget as f64 {
            return Err(AbcError::Budget {
                n_target: n,
                n_accepted: result.n_accepted,
                n_proposed: start,
                projected,
                budget,
            });
        }
    }
    Ok(result)
}
