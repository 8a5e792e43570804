//! Metrics and table export: RMSE, posterior moments, replicate MSE and the
//! monotonicity diagnostic against the Ising sufficient statistic.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::abc::{AbcError, SummaryStatistic};
use crate::dataset::Dataset;
use crate::models::ising::{ising_sufficient_stat, side_of};
use crate::models::IsingError;
use crate::types::{DataVec, ParamVec};

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("empty input")]
    Empty,
    #[error("length mismatch: {0} predictions vs {1} targets")]
    Length(usize, usize),
    #[error("dimension mismatch at row {row}: {got} vs {expected}")]
    Dim { row: usize, got: usize, expected: usize },
    #[error("need at least {need} {what}, got {got}")]
    TooFew { what: &'static str, need: usize, got: usize },
    #[error("summary must be scalar for this diagnostic, got dimension {0}")]
    NotScalar(usize),
    #[error("data length {0} is not a square lattice")]
    NotSquare(usize),
    #[error(transparent)]
    Summary(#[from] AbcError),
    #[error(transparent)]
    Ising(#[from] IsingError),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

/// Mean, standard deviation and (for q = 2) correlation of a posterior.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PosteriorMoments {
    pub mean: ParamVec,
    pub std: Vec<f64>,
    /// Correlation of the first two components; `None` when q < 2 or a
    /// component has zero variance.
    pub cor: Option<f64>,
}

fn check_rows(a: &[ParamVec], b: &[ParamVec]) -> Result<usize, EvalError> {
    if a.len() != b.len() {
        return Err(EvalError::Length(a.len(), b.len()));
    }
    let q = a.first().ok_or(EvalError::Empty)?.len();
    for (row, (x, y)) in a.iter().zip(b).enumerate() {
        for v in [x, y] {
            if v.len() != q {
                return Err(EvalError::Dim { row, got: v.len(), expected: q });
            }
        }
    }
    Ok(q)
}

/// Component-wise root-mean-square error.
pub fn rmse(predictions: &[ParamVec], targets: &[ParamVec]) -> Result<Vec<f64>, EvalError> {
    let q = check_rows(predictions, targets)?;
    let mut sums = vec![0.0; q];
    for (p, t) in predictions.iter().zip(targets) {
        for c in 0..q {
            sums[c] += (p[c] - t[c]).powi(2);
        }
    }
    let n = predictions.len() as f64;
    Ok(sums.into_iter().map(|s| (s / n).sqrt()).collect())
}

/// Sample mean, unbiased standard deviation and Pearson correlation.
pub fn moments(draws: &[ParamVec]) -> Result<PosteriorMoments, EvalError> {
    if draws.len() < 2 {
        return Err(EvalError::TooFew { what: "draws", need: 2, got: draws.len() });
    }
    let q = draws[0].len();
    if let Some(row) = draws.iter().position(|d| d.len() != q) {
        return Err(EvalError::Dim { row, got: draws[row].len(), expected: q });
    }
    let n = draws.len() as f64;
    let mean: Vec<f64> = (0..q).map(|c| draws.iter().map(|d| d[c]).sum::<f64>() / n).collect();
    let std: Vec<f64> = (0..q)
        .map(|c| (draws.iter().map(|d| (d[c] - mean[c]).powi(2)).sum::<f64>() / (n - 1.0)).sqrt())
        .collect();
    let cor = if q >= 2 {
        let a: Vec<f64> = draws.iter().map(|d| d[0]).collect();
        let b: Vec<f64> = draws.iter().map(|d| d[1]).collect();
        pearson(&a, &b)
    } else {
        None
    };
    Ok(PosteriorMoments { mean: ParamVec(mean), std, cor })
}

/// Pearson correlation; `None` for mismatched, short or constant input.
pub fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return None;
    }
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma).powi(2);
        sbb += (y - mb).powi(2);
    }
    if saa <= 0.0 || sbb <= 0.0 {
        return None;
    }
    Some((sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0))
}

/// Ranks starting at 1, ties sharing their average rank.
pub fn average_ranks(v: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&i, &j| v[i].total_cmp(&v[j]));
    let mut ranks = vec![0.0; v.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && v[order[end]] == v[order[start]] {
            end += 1;
        }
        let r = (start + end + 1) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = r;
        }
        start = end;
    }
    ranks
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(a: &[f64], b: &[f64]) -> Option<f64> {
    if a.len() != b.len() {
        return None;
    }
    pearson(&average_ranks(a), &average_ranks(b))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct HeatmapCell {
    pub s_star: i64,
    /// Centre of the summary-value bin.
    pub s_value: f64,
    pub count: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MonotonicityReport {
    /// `None` when either variable is constant over the used subset.
    pub rho: Option<f64>,
    pub n_used: usize,
    pub n_excluded: usize,
    pub cells: Vec<HeatmapCell>,
}

pub const HEATMAP_BINS: usize = 50;

/// Spearman correlation between a scalar summary and S* over Ising data,
/// optionally dropping the two saturated levels S* ∈ {2m²−8, 2m²}.
pub fn monotonicity_diagnostic(
    summary: &dyn SummaryStatistic,
    data: &Dataset,
    exclude_saturated: bool,
) -> Result<MonotonicityReport, EvalError> {
    if summary.dim() != 1 {
        return Err(EvalError::NotScalar(summary.dim()));
    }
    let m = side_of(data.p()).ok_or(EvalError::NotSquare(data.p()))?;
    let top = 2 * (m * m) as i64;
    let mut xs: Vec<&DataVec> = Vec::new();
    let mut stars = Vec::new();
    let mut n_excluded = 0;
    for (_, x) in &data.pairs {
        let s = ising_sufficient_stat(x, m)? as i64;
        if exclude_saturated && (s == top || s == top - 8) {
            n_excluded += 1;
            continue;
        }
        xs.push(x);
        stars.push(s);
    }
    if xs.is_empty() {
        return Ok(MonotonicityReport { rho: None, n_used: 0, n_excluded, cells: Vec::new() });
    }
    let values: Vec<f64> = summary.evaluate_batch(&xs)?.into_iter().map(|v| v[0]).collect();
    let star_f: Vec<f64> = stars.iter().map(|&s| s as f64).collect();
    let rho = spearman(&values, &star_f);

    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let width = if hi > lo { (hi - lo) / HEATMAP_BINS as f64 } else { 1.0 };
    let mut counts: BTreeMap<(i64, usize), u64> = BTreeMap::new();
    for (&s, &v) in stars.iter().zip(&values) {
        let bin = (((v - lo) / width) as usize).min(HEATMAP_BINS - 1);
        *counts.entry((s, bin)).or_default() += 1;
    }
    let cells = counts
        .into_iter()
        .map(|((s_star, bin), count)| HeatmapCell {
            s_star,
            s_value: lo + (bin as f64 + 0.5) * width,
            count,
        })
        .collect();
    Ok(MonotonicityReport { rho, n_used: xs.len(), n_excluded, cells })
}

/// Mean squared differences between exact and ABC moments across replicates.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MomentMse {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    /// Over replicates where both correlations are defined.
    pub cor: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ReplicateReport {
    /// (exact, abc) per replicate.
    pub replicates: Vec<(PosteriorMoments, PosteriorMoments)>,
    pub mse: MomentMse,
}

impl ReplicateReport {
    pub fn count(&self) -> usize {
        self.replicates.len()
    }
}

pub fn replicate_mse(replicates: &[(PosteriorMoments, PosteriorMoments)]) -> Result<ReplicateReport, EvalError> {
    if replicates.len() < 2 {
        return Err(EvalError::TooFew { what: "replicates", need: 2, got: replicates.len() });
    }
    let q = replicates[0].0.mean.len();
    for (row, (e, a)) in replicates.iter().enumerate() {
        for v in [e, a] {
            if v.mean.len() != q || v.std.len() != q {
                return Err(EvalError::Dim { row, got: v.mean.len(), expected: q });
            }
        }
    }
    let n = replicates.len() as f64;
    let avg = |f: &dyn Fn(&PosteriorMoments, usize) -> f64, c: usize| {
        replicates.iter().map(|(e, a)| (f(e, c) - f(a, c)).powi(2)).sum::<f64>() / n
    };
    let mean = (0..q).map(|c| avg(&|m, c| m.mean[c], c)).collect();
    let std = (0..q).map(|c| avg(&|m, c| m.std[c], c)).collect();
    let cors: Vec<f64> = replicates
        .iter()
        .filter_map(|(e, a)| Some((e.cor? - a.cor?).powi(2)))
        .collect();
    let cor = (!cors.is_empty()).then(|| cors.iter().sum::<f64>() / cors.len() as f64);
    Ok(ReplicateReport {
        replicates: replicates.to_vec(),
        mse: MomentMse { mean, std, cor },
    })
}

/// A CSV table with an optional leading `# ...` provenance line.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

/// Marker written for undefined values.
pub const UNDEFINED: &str = "NA";

pub fn fmt_num(v: f64) -> String {
    format!("{v}")
}

pub fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| UNDEFINED.to_owned(), fmt_num)
}

impl Table {
    pub fn new<S: AsRef<str>>(header: &[S]) -> Self {
        Self { header: header.iter().map(|s| s.as_ref().to_owned()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn write_csv<W: Write>(&self, mut w: W, comment: Option<&str>) -> Result<(), EvalError> {
        if let Some(c) = comment {
            writeln!(w, "# {c}")?;
        }
        let mut out = csv::Writer::from_writer(w);
        out.write_record(&self.header)?;
        for r in &self.rows {
            out.write_record(r)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self, comment: Option<&str>) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf, comment).expect("writing to memory");
        String::from_utf8(buf).expect("utf-8")
    }
}

pub const RMSE_HEADER_SCALAR: [&str; 4] = ["Method", "Training RMSE", "Testing RMSE", "Time (s)"];
pub const RMSE_HEADER: [&str; 6] = [
    "Method",
    "Training RMSE theta1",
    "Training RMSE theta2",
    "Testing RMSE theta1",
    "Testing RMSE theta2",
    "Time (s)",
];
pub const MOMENT_COLUMNS: [&str; 5] = ["mean(theta1)", "mean(theta2)", "std(theta1)", "std(theta2)", "cor(theta1,theta2)"];
pub const MOMENT_COLUMNS_SCALAR: [&str; 2] = ["mean(theta)", "std(theta)"];

/// Moment column names for a q-dimensional parameter (q = 1 or 2).
pub fn moment_columns(q: usize) -> &'static [&'static str] {
    if q == 1 { &MOMENT_COLUMNS_SCALAR } else { &MOMENT_COLUMNS }
}

/// Header for single-parameter (Ising) or two-parameter (MA(2)) RMSE tables.
pub fn rmse_table(q: usize) -> Table {
    if q == 1 { Table::new(&RMSE_HEADER_SCALAR) } else { Table::new(&RMSE_HEADER) }
}

pub fn rmse_row(method: &str, train: &[f64], test: &[f64], seconds: f64) -> Vec<String> {
    let mut row = vec![method.to_owned()];
    row.extend(train.iter().map(|&v| fmt_num(v)));
    row.extend(test.iter().map(|&v| fmt_num(v)));
    row.push(format!("{seconds:.2}"));
    row
}

pub fn moments_table(q: usize) -> Table {
    let mut h = vec!["Posterior"];
    h.extend(moment_columns(q));
    Table::new(&h)
}

fn moment_cells(mean: &[f64], std: &[f64], cor: Option<f64>) -> Vec<String> {
    let mut row: Vec<String> = mean.iter().chain(std).map(|&v| fmt_num(v)).collect();
    if mean.len() >= 2 {
        row.push(fmt_opt(cor));
    }
    row
}

pub fn moments_row(label: &str, m: &PosteriorMoments) -> Vec<String> {
    let mut row = vec![label.to_owned()];
    row.extend(moment_cells(&m.mean.0, &m.std, m.cor));
    row
}

/// Same columns as the moments table, holding MSEs.
pub fn mse_table(q: usize) -> Table {
    moments_table(q)
}

pub fn mse_row(label: &str, r: &ReplicateReport) -> Vec<String> {
    let mut row = vec![label.to_owned()];
    row.extend(moment_cells(&r.mse.mean, &r.mse.std, r.mse.cor));
    row
}

/// Parses the cells written by [`moments_row`] (without the label).
pub fn parse_moment_cells(cells: &[&str]) -> Option<PosteriorMoments> {
    let num = |s: &str| s.trim().parse::<f64>().ok();
    match cells.len() {
        2 => Some(PosteriorMoments { mean: ParamVec(vec![num(cells[0])?]), std: vec![num(cells[1])?], cor: None }),
        5 => Some(PosteriorMoments {
            mean: ParamVec(vec![num(cells[0])?, num(cells[1])?]),
            std: vec![num(cells[2])?, num(cells[3])?],
            cor: if cells[4].trim() == UNDEFINED { None } else { Some(num(cells[4])?) },
        }),
        _ => None,
    }
}

pub fn heatmap_table(report: &MonotonicityReport) -> Table {
    let mut t = Table::new(&["S_star", "S", "count"]);
    for c in &report.cells {
        t.push(vec![c.s_star.to_string(), fmt_num(c.s_value), c.count.to_string()]);
    }
    t
}
