use std::time::Instant;

use ndarray::{s, Array2, ArrayView2};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::mlp::{backprop_gradient, gather_rows, MlpModel};
use super::NnError;
use crate::dataset::Dataset;
use crate::rng::{derive_seed, lane, RngStream};
use crate::types::Split;

/// Samples laid out as dense matrices: inputs `N × p`, targets `N × q`.
#[derive(Clone, Debug, PartialEq)]
pub struct Examples {
    pub inputs: Array2<f64>,
    pub targets: Array2<f64>,
}

impl Examples {
    pub fn from_split(ds: &Dataset, split: Split) -> Examples {
        let idx = ds.indices(split);
        let (p, q) = (ds.p(), ds.q());
        let mut inputs = Array2::zeros((idx.len(), p));
        let mut targets = Array2::zeros((idx.len(), q));
        for (r, &i) in idx.iter().enumerate() {
            let (t, x) = &ds.pairs[i];
            inputs.row_mut(r).assign(&ndarray::ArrayView1::from(x.as_slice()));
            targets.row_mut(r).assign(&ndarray::ArrayView1::from(t.as_slice()));
        }
        Examples { inputs, targets }
    }

    pub fn len(&self) -> usize {
        self.inputs.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LrSchedule {
    Constant,
    /// Multiply the rate by `factor` every `every` epochs.
    StepDecay { every: usize, factor: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub minibatch_size: usize,
    pub learning_rate: f64,
    pub lr_schedule: LrSchedule,
    pub l2_lambda: f64,
    /// Stop after this many consecutive epochs without a new best
    /// validation loss; 0 disables early stopping.
    pub early_stopping_patience: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            minibatch_size: 64,
            learning_rate: 0.01,
            lr_schedule: LrSchedule::StepDecay { every: 50, factor: 0.5 },
            l2_lambda: 0.0,
            early_stopping_patience: 20,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), NnError> {
        if self.epochs == 0 {
            return Err(NnError::Config("epochs must be >= 1".into()));
        }
        if self.minibatch_size == 0 {
            return Err(NnError::Config("minibatch_size must be >= 1".into()));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(NnError::Config(format!("learning_rate {} invalid", self.learning_rate)));
        }
        if !(self.l2_lambda >= 0.0 && self.l2_lambda.is_finite()) {
            return Err(NnError::Config(format!("l2_lambda {} invalid", self.l2_lambda)));
        }
        if let LrSchedule::StepDecay { every, factor } = self.lr_schedule {
            if every == 0 || !(factor > 0.0) {
                return Err(NnError::Config("step decay needs every >= 1 and factor > 0".into()));
            }
        }
        Ok(())
    }

    pub fn rate_at(&self, epoch: usize) -> f64 {
        match self.lr_schedule {
            LrSchedule::Constant => self.learning_rate,
            LrSchedule::StepDecay { every, factor } => self.learning_rate * factor.powi((epoch / every) as i32),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mean squared error over the epoch's minibatches, before each update.
    pub train_loss: Vec<f64>,
    /// Mean squared error on the validation split after each epoch.
    pub val_loss: Vec<f64>,
    /// 1-based epoch whose parameters were returned.
    pub best_epoch: usize,
    /// 1-based last epoch that ran.
    pub stopped_epoch: usize,
    pub wall_time_seconds: f64,
    pub train_rmse: Vec<f64>,
    pub test_rmse: Option<Vec<f64>>,
}

impl TrainReport {
    pub fn best_val_loss(&self) -> f64 {
        self.val_loss[self.best_epoch - 1]
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,train_loss,val_loss\n");
        for (e, (t, v)) in self.train_loss.iter().zip(&self.val_loss).enumerate() {
            out.push_str(&format!("{},{t},{v}\n", e + 1));
        }
        out
    }
}

const EVAL_CHUNK: usize = 4096;

/// Mean squared error over a sample set, evaluated in chunks.
pub(crate) fn mse(model: &MlpModel, inputs: ArrayView2<f64>, targets: ArrayView2<f64>) -> Result<f64, NnError> {
    let n = inputs.nrows();
    if n == 0 {
        return Err(NnError::EmptyBatch);
    }
    let mut total = 0.0;
    let mut start = 0;
    while start < n {
        let end = (start + EVAL_CHUNK).min(n);
        let out = model.forward_batch(inputs.slice(s![start..end, ..]))?;
        let t = targets.slice(s![start..end, ..]);
        total += out.iter().zip(t.iter()).map(|(o, t)| (o - t) * (o - t)).sum::<f64>();
        start = end;
    }
    Ok(total / n as f64)
}

/// Per-component root mean squared error of the network on a sample set.
pub(crate) fn component_rmse(model: &MlpModel, ex: &Examples) -> Result<Vec<f64>, NnError> {
    let n = ex.len();
    if n == 0 {
        return Err(NnError::EmptyBatch);
    }
    let q = ex.targets.ncols();
    let mut sums = vec![0.0; q];
    let mut start = 0;
    while start < n {
        let end = (start + EVAL_CHUNK).min(n);
        let out = model.forward_batch(ex.inputs.slice(s![start..end, ..]))?;
        for (o_row, t_row) in out.rows().into_iter().zip(ex.targets.slice(s![start..end, ..]).rows()) {
            for k in 0..q {
                sums[k] += (o_row[k] - t_row[k]).powi(2);
            }
        }
        start = end;
    }
    Ok(sums.into_iter().map(|s| (s / n as f64).sqrt()).collect())
}

/// Minibatch stochastic gradient descent with early stopping.
///
/// Each epoch visits the training split in a fresh random order. The
/// returned model is the one with the lowest validation loss seen.
pub fn train(init: &MlpModel, data: &Dataset, cfg: &TrainConfig) -> Result<(MlpModel, TrainReport), NnError> {
    let train_ex = Examples::from_split(data, Split::Train);
    let val_ex = Examples::from_split(data, Split::Validation);
    let test_ex = Examples::from_split(data, Split::Test);
    train_examples(init, &train_ex, &val_ex, (!test_ex.is_empty()).then_some(&test_ex), cfg)
}

pub fn train_examples(
    init: &MlpModel,
    train_ex: &Examples,
    val_ex: &Examples,
    test_ex: Option<&Examples>,
    cfg: &TrainConfig,
) -> Result<(MlpModel, TrainReport), NnError> {
    cfg.validate()?;
    if train_ex.is_empty() {
        return Err(NnError::MissingSplit("train"));
    }
    if val_ex.is_empty() {
        return Err(NnError::MissingSplit("validation"));
    }
    let started = Instant::now();
    let mut model = init.clone();
    let mut best = model.clone();
    let mut best_val = f64::INFINITY;
    let mut best_epoch = 0;
    let mut since_best = 0;
    let mut train_loss = Vec::new();
    let mut val_loss = Vec::new();
    let mut order: Vec<usize> = (0..train_ex.len()).collect();
    let shuffle_seed = derive_seed(cfg.seed, lane::SHUFFLE);

    for epoch in 0..cfg.epochs {
        let rate = cfg.rate_at(epoch);
        let mut rng = RngStream::new(shuffle_seed, epoch as u64);
        order.shuffle(&mut rng);
        let mut epoch_sq = 0.0;
        for chunk in order.chunks(cfg.minibatch_size) {
            let xb = gather_rows(train_ex.inputs.view(), chunk);
            let yb = gather_rows(train_ex.targets.view(), chunk);
            let (value, grad) = backprop_gradient(&model, xb.view(), yb.view(), cfg.l2_lambda)?;
            if !value.is_finite() {
                return Err(NnError::Diverged { epoch: epoch + 1, learning_rate: rate, loss: value });
            }
            let data_part = value - cfg.l2_lambda * model.penalty_norm();
            epoch_sq += data_part * chunk.len() as f64;
            model.apply_step(&grad, rate);
        }
        let tl = epoch_sq / train_ex.len() as f64;
        let vl = mse(&model, val_ex.inputs.view(), val_ex.targets.view())?;
        if !tl.is_finite() || !vl.is_finite() || !model.is_finite() {
            return Err(NnError::Diverged {
                epoch: epoch + 1,
                learning_rate: rate,
                loss: if vl.is_finite() { tl } else { vl },
            });
        }
        train_loss.push(tl.max(0.0));
        val_loss.push(vl);
        log::debug!("epoch {} lr {rate} train {tl:.6} val {vl:.6}", epoch + 1);
        if vl < best_val {
            best_val = vl;
            best = model.clone();
            best_epoch = epoch + 1;
            since_best = 0;
        } else {
            since_best += 1;
            if cfg.early_stopping_patience > 0 && since_best >= cfg.early_stopping_patience {
                break;
            }
        }
    }
    let stopped_epoch = val_loss.len();
    let train_rmse = component_rmse(&best, train_ex)?;
    let test_rmse = test_ex.map(|t| component_rmse(&best, t)).transpose()?;
    let report = TrainReport {
        train_loss,
        val_loss,
        best_epoch,
        stopped_epoch,
        wall_time_seconds: started.elapsed().as_secs_f64(),
        train_rmse,
        test_rmse,
    };
    Ok((best, report))
}
