//! Semi-automatic summaries: least-squares regression of θ on candidate
//! statistics of X.

use std::path::Path;

use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::checkpoint::{CheckpointError, Container};
use crate::dataset::Dataset;
use crate::types::{DataVec, ParamVec, Split};

pub const LINEAR_KIND: &str = "linear-summary";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CandidateBasis {
    /// The raw components X_1..X_p.
    RawComponents,
    /// Elementwise powers X_j, X_j², ..., X_j^d.
    PolynomialPowers { max_degree: u32 },
}

impl CandidateBasis {
    pub fn dim(&self, p: usize) -> usize {
        match self {
            CandidateBasis::RawComponents => p,
            CandidateBasis::PolynomialPowers { max_degree } => p * *max_degree as usize,
        }
    }

    pub fn validate(&self) -> Result<(), SemiautoError> {
        match self {
            CandidateBasis::PolynomialPowers { max_degree: 0 } => Err(SemiautoError::Degree),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum SemiautoError {
    #[error("polynomial basis needs max_degree >= 1")]
    Degree,
    #[error("training split is empty")]
    NoTrainingData,
    #[error("input has {got} entries, summary expects {expected}")]
    InputDim { got: usize, expected: usize },
    #[error("normal equations could not be solved even with ridge regularization")]
    Singular,
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
}

/// θ̂(x) = intercept + coefficients · expand_basis(x).
#[derive(Clone, Debug, PartialEq)]
pub struct LinearSummary {
    pub intercept: ParamVec,
    /// q × K.
    pub coefficients: Array2<f64>,
    pub basis: CandidateBasis,
    /// Input dimension p.
    pub input_dim: usize,
    /// True when the ridge fallback was needed.
    pub ridge_used: bool,
}

pub fn expand_basis(x: &DataVec, basis: CandidateBasis) -> Vec<f64> {
    let mut out = Vec::with_capacity(basis.dim(x.len()));
    expand_into(x.as_slice(), basis, &mut out);
    out
}

fn expand_into(x: &[f64], basis: CandidateBasis, out: &mut Vec<f64>) {
    match basis {
        CandidateBasis::RawComponents => out.extend_from_slice(x),
        CandidateBasis::PolynomialPowers { max_degree } => {
            for d in 1..=max_degree as i32 {
                out.extend(x.iter().map(|v| v.powi(d)));
            }
        }
    }
}

fn feature_matrix(rows: &[&[f64]], basis: CandidateBasis) -> Array2<f64> {
    let k = basis.dim(rows.first().map_or(0, |r| r.len()));
    let mut flat = Vec::with_capacity(rows.len() * k);
    for r in rows {
        expand_into(r, basis, &mut flat);
    }
    Array2::from_shape_vec((rows.len(), k), flat).expect("consistent row lengths")
}

impl LinearSummary {
    pub fn output_dim(&self) -> usize {
        self.coefficients.nrows()
    }

    pub fn predict(&self, x: &DataVec) -> Result<ParamVec, SemiautoError> {
        if x.len() != self.input_dim {
            return Err(SemiautoError::InputDim { got: x.len(), expected: self.input_dim });
        }
        let f = Array1::from(expand_basis(x, self.basis));
        let y = self.coefficients.dot(&f);
        Ok(ParamVec(y.iter().zip(&self.intercept.0).map(|(a, b)| a + b).collect()))
    }

    /// Predictions for a `B × p` batch, returned as `B × q`.
    pub fn predict_batch(&self, inputs: ArrayView2<f64>) -> Result<Array2<f64>, SemiautoError> {
        if inputs.ncols() != self.input_dim {
            return Err(SemiautoError::InputDim { got: inputs.ncols(), expected: self.input_dim });
        }
        let rows: Vec<&[f64]> = inputs
            .rows()
            .into_iter()
            .map(|r| r.to_slice().expect("standard layout"))
            .collect();
        let f = feature_matrix(&rows, self.basis);
        let mut y = f.dot(&self.coefficients.t());
        y += &Array1::from(self.intercept.0.clone());
        Ok(y)
    }

    pub fn to_container(&self) -> Container {
        let mut c = Container::new(LINEAR_KIND);
        c.set("basis", serde_json::to_value(self.basis).expect("serializable"));
        c.set("input_dim", self.input_dim);
        c.set("ridge_used", self.ridge_used);
        c.push("intercept", vec![self.intercept.len()], self.intercept.0.clone());
        c.push(
            "coefficients",
            vec![self.coefficients.nrows(), self.coefficients.ncols()],
            self.coefficients.iter().copied().collect(),
        );
        c
    }

    pub fn from_container(c: &Container) -> Result<Self, SemiautoError> {
        let schema = |m: String| SemiautoError::Checkpoint(CheckpointError::Schema(m));
        if c.kind() != Some(LINEAR_KIND) {
            return Err(schema(format!("expected kind {LINEAR_KIND}, found {:?}", c.kind())));
        }
        let basis: CandidateBasis =
            serde_json::from_value(c.require("basis")?.clone()).map_err(|e| schema(format!("basis: {e}")))?;
        let input_dim = c.require("input_dim")?.as_u64().ok_or_else(|| schema("input_dim".into()))? as usize;
        let intercept = c.tensor("intercept")?;
        let coef = c.tensor("coefficients")?;
        let q = intercept.data.len();
        if coef.shape != [q, basis.dim(input_dim)] {
            return Err(schema(format!(
                "coefficients shape {:?} inconsistent with q = {q}, K = {}",
                coef.shape,
                basis.dim(input_dim)
            )));
        }
        Ok(Self {
            intercept: ParamVec(intercept.data.clone()),
            coefficients: Array2::from_shape_vec((coef.shape[0], coef.shape[1]), coef.data.clone())
                .expect("shape checked"),
            basis,
            input_dim,
            ridge_used: c.header.get("ridge_used").and_then(|v| v.as_bool()).unwrap_or(false),
        })
    }

    pub fn save(&self, path: impl AsRef<Path>, extra: &[(&str, serde_json::Value)]) -> Result<(), SemiautoError> {
        let mut c = self.to_container();
        for (k, v) in extra {
            c.set(k, v.clone());
        }
        Ok(c.save(path)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, SemiautoError> {
        Self::from_container(&Container::load(path)?)
    }
}

/// In-place Cholesky solve of `a x = b` for several right-hand sides.
/// Returns `None` if `a` is not numerically positive definite.
fn cholesky_solve(a: &Array2<f64>, b: &Array2<f64>) -> Option<Array2<f64>> {
    let n = a.nrows();
    let mut l = Array2::<f64>::zeros((n, n));
    let max_diag = a.diag().iter().copied().fold(0.0, f64::max);
    for j in 0..n {
        let mut d = a[[j, j]];
        for k in 0..j {
            d -= l[[j, k]] * l[[j, k]];
        }
        if !(d > 1e-13 * max_diag) {
            return None;
        }
        let d = d.sqrt();
        l[[j, j]] = d;
        for i in j + 1..n {
            let mut v = a[[i, j]];
            for k in 0..j {
                v -= l[[i, k]] * l[[j, k]];
            }
            l[[i, j]] = v / d;
        }
    }
    let mut x = b.clone();
    for c in 0..b.ncols() {
        for i in 0..n {
            let mut v = x[[i, c]];
            for k in 0..i {
                v -= l[[i, k]] * x[[k, c]];
            }
            x[[i, c]] = v / l[[i, i]];
        }
        for i in (0..n).rev() {
            let mut v = x[[i, c]];
            for k in i + 1..n {
                v -= l[[k, i]] * x[[k, c]];
            }
            x[[i, c]] = v / l[[i, i]];
        }
    }
    Some(x)
}

const FIT_CHUNK: usize = 2048;

/// Ordinary least squares of θ on the candidate statistics, fitted on the
/// training split. Features are centred and scaled before forming the
/// normal equations; if those are singular a ridge term of 1e-8·trace is
/// added and a warning logged.
pub fn fit_linear_summary(data: &Dataset, basis: CandidateBasis) -> Result<LinearSummary, SemiautoError> {
    basis.validate()?;
    let rows: Vec<(&[f64], &[f64])> = data
        .split_pairs(Split::Train)
        .map(|(t, x)| (x.as_slice(), t.as_slice()))
        .collect();
    if rows.is_empty() {
        return Err(SemiautoError::NoTrainingData);
    }
    let n = rows.len() as f64;
    let p = data.p();
    let q = data.q();
    let k = basis.dim(p);

    // Pass 1: feature and target means, feature scales.
    let mut mean_f = Array1::<f64>::zeros(k);
    let mut mean_t = Array1::<f64>::zeros(q);
    let mut buf = Vec::with_capacity(k);
    for (x, t) in &rows {
        buf.clear();
        expand_into(x, basis, &mut buf);
        mean_f.iter_mut().zip(&buf).for_each(|(m, v)| *m += v);
        mean_t.iter_mut().zip(t.iter()).for_each(|(m, v)| *m += v);
    }
    mean_f /= n;
    mean_t /= n;
    let mut var_f = Array1::<f64>::zeros(k);
    for (x, _) in &rows {
        buf.clear();
        expand_into(x, basis, &mut buf);
        var_f.iter_mut().zip(buf.iter().zip(&mean_f)).for_each(|(s, (v, m))| *s += (v - m) * (v - m));
    }
    let scale: Array1<f64> = var_f.mapv(|v| {
        let sd = (v / n).sqrt();
        if sd > 0.0 { sd } else { 1.0 }
    });

    // Pass 2: normal equations on standardized features.
    let mut gram = Array2::<f64>::zeros((k, k));
    let mut cross = Array2::<f64>::zeros((k, q));
    for chunk in rows.chunks(FIT_CHUNK) {
        let xs: Vec<&[f64]> = chunk.iter().map(|(x, _)| *x).collect();
        let mut z = feature_matrix(&xs, basis);
        z -= &mean_f;
        z /= &scale;
        let mut y = Array2::<f64>::zeros((chunk.len(), q));
        for (r, (_, t)) in chunk.iter().enumerate() {
            for c in 0..q {
                y[[r, c]] = t[c] - mean_t[c];
            }
        }
        gram += &z.t().dot(&z);
        cross += &z.t().dot(&y);
    }

    let mut ridge_used = false;
    let gamma = match cholesky_solve(&gram, &cross) {
        Some(g) => g,
        None => {
            let trace: f64 = gram.diag().sum();
            let ridge = 1e-8 * trace;
            log::warn!("normal equations singular (K = {k}, N = {}); adding ridge {ridge:e}", rows.len());
            let mut reg = gram.clone();
            reg.diag_mut().iter_mut().for_each(|d| *d += ridge);
            ridge_used = true;
            cholesky_solve(&reg, &cross).ok_or(SemiautoError::Singular)?
        }
    };

    // Back to the original feature scale.
    let mut coefficients = Array2::<f64>::zeros((q, k));
    for j in 0..k {
        for c in 0..q {
            coefficients[[c, j]] = gamma[[j, c]] / scale[j];
        }
    }
    let shift = coefficients.dot(&mean_f);
    let intercept = ParamVec((0..q).map(|c| mean_t[c] - shift[c]).collect());
    Ok(LinearSummary {
        intercept,
        coefficients,
        basis,
        input_dim: p,
        ridge_used,
    })
}

/// Per-component RMSE of a linear summary on one split.
pub fn linear_rmse(summary: &LinearSummary, data: &Dataset, split: Split) -> Result<Vec<f64>, SemiautoError> {
    let pairs: Vec<_> = data.split_pairs(split).collect();
    let q = summary.output_dim();
    let mut sums = vec![0.0; q];
    for chunk in pairs.chunks(FIT_CHUNK) {
        let mut inputs = Array2::zeros((chunk.len(), summary.input_dim));
        for (r, (_, x)) in chunk.iter().enumerate() {
            inputs.slice_mut(s![r, ..]).assign(&ndarray::ArrayView1::from(x.as_slice()));
        }
        let pred = summary.predict_batch(inputs.view())?;
        for ((t, _), row) in chunk.iter().zip(pred.axis_iter(Axis(0))) {
            for c in 0..q {
                sums[c] += (row[c] - t[c]).powi(2);
            }
        }
    }
    let n = pairs.len().max(1) as f64;
    Ok(sums.into_iter().map(|s| (s / n).sqrt()).collect())
}
