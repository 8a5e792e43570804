use std::path::Path;

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis, Zip};
use rand::Rng;

use super::NnError;
use crate::checkpoint::{CheckpointError, Container};
use crate::rng::RngStream;
use crate::types::{DataVec, ParamVec};

pub const MLP_KIND: &str = "mlp";

/// Fully connected network: tanh on every hidden layer, identity output.
///
/// `layer_sizes = [p, n1, ..., nL, q]`; `weights[l]` is `n(l+1) × n(l)`.
#[derive(Clone, Debug, PartialEq)]
pub struct MlpModel {
    layer_sizes: Vec<usize>,
    weights: Vec<Array2<f64>>,
    biases: Vec<Array1<f64>>,
}

/// Gradient with the same layout as the model parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradient {
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
}

impl Gradient {
    /// Flattened in the same order as [`MlpModel::params_flat`].
    pub fn flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend(w.iter());
            out.extend(b.iter());
        }
        out
    }
}

/// Provenance stored next to the parameters in a checkpoint.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CheckpointMeta {
    pub l2_lambda: f64,
    pub seed: u64,
    pub training_hash: String,
    pub config_hash: Option<String>,
    pub method: Option<String>,
}

fn check_sizes(layer_sizes: &[usize]) -> Result<(), NnError> {
    if layer_sizes.len() < 3 {
        return Err(NnError::NoHiddenLayer);
    }
    if layer_sizes.contains(&0) {
        return Err(NnError::EmptyLayer(layer_sizes.to_vec()));
    }
    Ok(())
}

impl MlpModel {
    pub fn zeros(layer_sizes: &[usize]) -> Result<Self, NnError> {
        check_sizes(layer_sizes)?;
        let weights = layer_sizes.windows(2).map(|w| Array2::zeros((w[1], w[0]))).collect();
        let biases = layer_sizes[1..].iter().map(|&n| Array1::zeros(n)).collect();
        Ok(Self {
            layer_sizes: layer_sizes.to_vec(),
            weights,
            biases,
        })
    }

    /// Weights uniform on ±sqrt(6 / (fan_in + fan_out)), biases zero.
    pub fn init(layer_sizes: &[usize], rng: &mut RngStream) -> Result<Self, NnError> {
        let mut model = Self::zeros(layer_sizes)?;
        for w in &mut model.weights {
            let (rows, cols) = w.dim();
            let a = (6.0 / (rows + cols) as f64).sqrt();
            w.iter_mut().for_each(|v| *v = rng.random_range(-a..a));
        }
        Ok(model)
    }

    /// Input size p, `hidden` equal-width tanh layers, output size q.
    pub fn architecture(p: usize, hidden: usize, width: usize, q: usize) -> Vec<usize> {
        let mut sizes = vec![p];
        sizes.extend(std::iter::repeat_n(width, hidden));
        sizes.push(q);
        sizes
    }

    pub fn from_parts(
        layer_sizes: Vec<usize>,
        weights: Vec<Array2<f64>>,
        biases: Vec<Array1<f64>>,
    ) -> Result<Self, NnError> {
        check_sizes(&layer_sizes)?;
        let layers = layer_sizes.len() - 1;
        if weights.len() != layers || biases.len() != layers {
            return Err(NnError::Shape(format!(
                "{} weight and {} bias tensors for {layers} layers",
                weights.len(),
                biases.len()
            )));
        }
        for l in 0..layers {
            let want = (layer_sizes[l + 1], layer_sizes[l]);
            if weights[l].dim() != want {
                return Err(NnError::Shape(format!("W{l} is {:?}, expected {want:?}", weights[l].dim())));
            }
            if biases[l].len() != want.0 {
                return Err(NnError::Shape(format!("b{l} has {} entries, expected {}", biases[l].len(), want.0)));
            }
            if weights[l].iter().chain(biases[l].iter()).any(|v| !v.is_finite()) {
                return Err(NnError::NonFinite);
            }
        }
        Ok(Self {
            layer_sizes,
            weights,
            biases,
        })
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn weights(&self) -> &[Array2<f64>] {
        &self.weights
    }

    pub fn biases(&self) -> &[Array1<f64>] {
        &self.biases
    }

    pub fn weights_mut(&mut self) -> &mut [Array2<f64>] {
        &mut self.weights
    }

    pub fn biases_mut(&mut self) -> &mut [Array1<f64>] {
        &mut self.biases
    }

    /// Number of hidden layers L.
    pub fn hidden_layers(&self) -> usize {
        self.layer_sizes.len() - 2
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    pub fn num_params(&self) -> usize {
        self.weights.iter().map(|w| w.len()).sum::<usize>() + self.biases.iter().map(|b| b.len()).sum::<usize>()
    }

    /// Σ_{l ≥ 1} ‖W^(l)‖²_F; the input layer W^(0) is not penalized.
    pub fn penalty_norm(&self) -> f64 {
        self.weights[1..].iter().map(|w| w.iter().map(|v| v * v).sum::<f64>()).sum()
    }

    pub fn forward(&self, x: &DataVec) -> Result<ParamVec, NnError> {
        if x.len() != self.input_dim() {
            return Err(NnError::InputDim {
                got: x.len(),
                expected: self.input_dim(),
            });
        }
        let mut h = ArrayView1::from(x.as_slice()).to_owned();
        let last = self.weights.len() - 1;
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let mut z = w.dot(&h) + b;
            if l < last {
                z.mapv_inplace(f64::tanh);
            }
            h = z;
        }
        Ok(ParamVec(h.to_vec()))
    }

    /// Row-wise forward pass over a `B × p` batch, returning `B × q`.
    pub fn forward_batch(&self, inputs: ArrayView2<f64>) -> Result<Array2<f64>, NnError> {
        if inputs.ncols() != self.input_dim() {
            return Err(NnError::InputDim {
                got: inputs.ncols(),
                expected: self.input_dim(),
            });
        }
        let mut h = inputs.to_owned();
        let last = self.weights.len() - 1;
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let mut z = h.dot(&w.t());
            z += b;
            if l < last {
                z.mapv_inplace(f64::tanh);
            }
            h = z;
        }
        Ok(h)
    }

    /// Forward pass that keeps every layer's activations, for backprop.
    fn forward_trace(&self, inputs: ArrayView2<f64>) -> Vec<Array2<f64>> {
        let mut acts = Vec::with_capacity(self.weights.len() + 1);
        acts.push(inputs.to_owned());
        let last = self.weights.len() - 1;
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let mut z = acts[l].dot(&w.t());
            z += b;
            if l < last {
                z.mapv_inplace(f64::tanh);
            }
            acts.push(z);
        }
        acts
    }

    pub fn zero_gradient(&self) -> Gradient {
        Gradient {
            weights: self.weights.iter().map(|w| Array2::zeros(w.dim())).collect(),
            biases: self.biases.iter().map(|b| Array1::zeros(b.len())).collect(),
        }
    }

    /// Applies `θ ← θ − step · g`.
    pub fn apply_step(&mut self, grad: &Gradient, step: f64) {
        for (w, g) in self.weights.iter_mut().zip(&grad.weights) {
            w.scaled_add(-step, g);
        }
        for (b, g) in self.biases.iter_mut().zip(&grad.biases) {
            b.scaled_add(-step, g);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().all(|w| w.iter().all(|v| v.is_finite()))
            && self.biases.iter().all(|b| b.iter().all(|v| v.is_finite()))
    }

    /// All parameters flattened as W0, b0, W1, b1, ...
    pub fn params_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend(w.iter());
            out.extend(b.iter());
        }
        out
    }

    pub fn set_params_flat(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.num_params());
        let mut it = flat.iter();
        for (w, b) in self.weights.iter_mut().zip(&mut self.biases) {
            w.iter_mut().for_each(|v| *v = *it.next().unwrap());
            b.iter_mut().for_each(|v| *v = *it.next().unwrap());
        }
    }

    pub fn to_container(&self, meta: &CheckpointMeta) -> Container {
        let mut c = Container::new(MLP_KIND);
        c.set("layer_sizes", self.layer_sizes.clone());
        c.set("activation", "tanh");
        c.set("output_activation", "identity");
        c.set("input_standardization", "none");
        c.set("l2_lambda", meta.l2_lambda);
        c.set("seed", meta.seed);
        c.set("training_hash", meta.training_hash.clone());
        if let Some(h) = &meta.config_hash {
            c.set("config_hash", h.clone());
        }
        if let Some(m) = &meta.method {
            c.set("method", m.clone());
        }
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            c.push(format!("W{l}"), vec![w.nrows(), w.ncols()], w.iter().copied().collect());
            c.push(format!("b{l}"), vec![b.len()], b.to_vec());
        }
        c
    }

    pub fn from_container(c: &Container) -> Result<(Self, CheckpointMeta), NnError> {
        let schema = |m: String| NnError::Checkpoint(CheckpointError::Schema(m));
        if c.kind() != Some(MLP_KIND) {
            return Err(schema(format!("expected kind {MLP_KIND}, found {:?}", c.kind())));
        }
        if c.require("activation")?.as_str() != Some("tanh") {
            return Err(schema("unsupported activation".into()));
        }
        let layer_sizes: Vec<usize> = serde_json::from_value(c.require("layer_sizes")?.clone())
            .map_err(|e| schema(format!("layer_sizes: {e}")))?;
        check_sizes(&layer_sizes)?;
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for l in 0..layer_sizes.len() - 1 {
            let (rows, cols) = (layer_sizes[l + 1], layer_sizes[l]);
            let w = c.tensor(&format!("W{l}"))?;
            if w.shape != [rows, cols] {
                return Err(schema(format!(
                    "W{l} has shape {:?} but layer_sizes imply [{rows}, {cols}]",
                    w.shape
                )));
            }
            let b = c.tensor(&format!("b{l}"))?;
            if b.shape != [rows] {
                return Err(schema(format!("b{l} has shape {:?} but layer_sizes imply [{rows}]", b.shape)));
            }
            weights.push(Array2::from_shape_vec((rows, cols), w.data.clone()).expect("shape checked"));
            biases.push(Array1::from(b.data.clone()));
        }
        let meta = CheckpointMeta {
            l2_lambda: c.header.get("l2_lambda").and_then(|v| v.as_f64()).unwrap_or(0.0),
            seed: c.header.get("seed").and_then(|v| v.as_u64()).unwrap_or(0),
            training_hash: c
                .header
                .get("training_hash")
                .and_then(|v| v.as_str())
                .unwrap_or_default()
                .to_owned(),
            config_hash: c.header.get("config_hash").and_then(|v| v.as_str()).map(str::to_owned),
            method: c.header.get("method").and_then(|v| v.as_str()).map(str::to_owned),
        };
        Ok((Self::from_parts(layer_sizes, weights, biases)?, meta))
    }

    pub fn save(&self, path: impl AsRef<Path>, meta: &CheckpointMeta) -> Result<(), NnError> {
        Ok(self.to_container(meta).save(path)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<(Self, CheckpointMeta), NnError> {
        Self::from_container(&Container::load(path)?)
    }
}

/// Squared-error objective: mean over the batch of ‖f(x) − θ‖² plus
/// λ Σ_{l ≥ 1} ‖W^(l)‖²_F.
pub fn loss(model: &MlpModel, inputs: ArrayView2<f64>, targets: ArrayView2<f64>, l2_lambda: f64) -> Result<f64, NnError> {
    Ok(data_loss(model, inputs, targets)? + l2_lambda * model.penalty_norm())
}

/// Mean squared error term of [`loss`] only.
pub fn data_loss(model: &MlpModel, inputs: ArrayView2<f64>, targets: ArrayView2<f64>) -> Result<f64, NnError> {
    check_batch(model, inputs, targets)?;
    let out = model.forward_batch(inputs)?;
    let sq: f64 = Zip::from(&out).and(&targets).fold(0.0, |acc, &o, &t| acc + (o - t) * (o - t));
    Ok(sq / inputs.nrows() as f64)
}

fn check_batch(model: &MlpModel, inputs: ArrayView2<f64>, targets: ArrayView2<f64>) -> Result<(), NnError> {
    if inputs.nrows() == 0 {
        return Err(NnError::EmptyBatch);
    }
    if inputs.nrows() != targets.nrows() {
        return Err(NnError::Shape(format!("{} inputs vs {} targets", inputs.nrows(), targets.nrows())));
    }
    if inputs.ncols() != model.input_dim() {
        return Err(NnError::InputDim { got: inputs.ncols(), expected: model.input_dim() });
    }
    if targets.ncols() != model.output_dim() {
        return Err(NnError::Shape(format!(
            "targets have {} columns, network outputs {}",
            targets.ncols(),
            model.output_dim()
        )));
    }
    Ok(())
}

/// Exact gradient of [`loss`] by backpropagation. Returns `(loss, gradient)`.
pub fn backprop_gradient(
    model: &MlpModel,
    inputs: ArrayView2<f64>,
    targets: ArrayView2<f64>,
    l2_lambda: f64,
) -> Result<(f64, Gradient), NnError> {
    check_batch(model, inputs, targets)?;
    let n = inputs.nrows() as f64;
    let acts = model.forward_trace(inputs);
    let layers = model.weights.len();
    let out = &acts[layers];
    let mut delta = out - &targets;
    let sq: f64 = delta.iter().map(|d| d * d).sum();
    let value = sq / n + l2_lambda * model.penalty_norm();
    delta *= 2.0 / n;

    let mut grad = model.zero_gradient();
    for l in (0..layers).rev() {
        // delta is dJ/dz for layer l's pre-activation, B × n(l+1).
        grad.weights[l] = delta.t().dot(&acts[l]);
        grad.biases[l] = delta.sum_axis(Axis(0));
        if l >= 1 {
            grad.weights[l].scaled_add(2.0 * l2_lambda, &model.weights[l]);
            let mut back = delta.dot(&model.weights[l]);
            Zip::from(&mut back).and(&acts[l]).for_each(|d, &h| *d *= 1.0 - h * h);
            delta = back;
        }
    }
    Ok((value, grad))
}

/// Relative discrepancy ‖g − ĝ‖ / (‖g‖ + ‖ĝ‖) between the backprop gradient
/// g and central differences ĝ with step `h`, over the given flat parameter
/// coordinates (all of them when `coords` is `None`).
pub fn gradient_check(
    model: &MlpModel,
    inputs: ArrayView2<f64>,
    targets: ArrayView2<f64>,
    l2_lambda: f64,
    h: f64,
    coords: Option<&[usize]>,
) -> Result<f64, NnError> {
    let (_, grad) = backprop_gradient(model, inputs, targets, l2_lambda)?;
    let exact = grad.flat();
    let all: Vec<usize>;
    let coords = match coords {
        Some(c) => c,
        None => {
            all = (0..exact.len()).collect();
            &all
        }
    };
    let base = model.params_flat();
    let mut probe = model.clone();
    let (mut diff, mut norm_a, mut norm_b) = (0.0, 0.0, 0.0);
    for &k in coords {
        let mut p = base.clone();
        p[k] = base[k] + h;
        probe.set_params_flat(&p);
        let up = loss(&probe, inputs, targets, l2_lambda)?;
        p[k] = base[k] - h;
        probe.set_params_flat(&p);
        let down = loss(&probe, inputs, targets, l2_lambda)?;
        let fd = (up - down) / (2.0 * h);
        diff += (exact[k] - fd).powi(2);
        norm_a += exact[k] * exact[k];
        norm_b += fd * fd;
    }
    let denom = norm_a.sqrt() + norm_b.sqrt();
    Ok(if denom == 0.0 { 0.0 } else { diff.sqrt() / denom })
}

/// Gathers rows `idx` of a sample matrix into a contiguous batch.
pub fn gather_rows(source: ArrayView2<f64>, idx: &[usize]) -> Array2<f64> {
    let mut out = Array2::zeros((idx.len(), source.ncols()));
    for (r, &i) in idx.iter().enumerate() {
        out.slice_mut(s![r, ..]).assign(&source.row(i));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn zero_model_outputs_zero() {
        let m = MlpModel::zeros(&[5, 3, 2]).unwrap();
        let y = m.forward(&DataVec(vec![1.0, -2.0, 3.0, 0.5, 9.0])).unwrap();
        assert_eq!(y.0, vec![0.0, 0.0]);
    }

    #[test]
    fn no_hidden_layer_is_rejected() {
        assert_eq!(MlpModel::zeros(&[4, 2]).unwrap_err(), NnError::NoHiddenLayer);
    }

    #[test]
    fn hand_computed_forward() {
        // p = 1, one hidden layer of two units, q = 1.
        let w0 = array![[0.5], [-1.0]];
        let b0 = array![0.1, 0.2];
        let w1 = array![[2.0, 3.0]];
        let b1 = array![-0.5];
        let m = MlpModel::from_parts(vec![1, 2, 1], vec![w0, w1], vec![b0, b1]).unwrap();
        let x = 0.7;
        let expect = 2.0 * (0.5f64 * x + 0.1).tanh() + 3.0 * (-1.0f64 * x + 0.2).tanh() - 0.5;
        let got = m.forward(&DataVec(vec![x])).unwrap()[0];
        assert!((got - expect).abs() < 1e-12);
    }

    #[test]
    fn forward_dimension_mismatch() {
        let m = MlpModel::zeros(&[3, 2, 1]).unwrap();
        assert_eq!(
            m.forward(&DataVec(vec![1.0])).unwrap_err(),
            NnError::InputDim { got: 1, expected: 3 }
        );
    }

    #[test]
    fn batch_forward_matches_single() {
        let mut rng = RngStream::new(1, 0);
        let m = MlpModel::init(&[6, 5, 4, 2], &mut rng).unwrap();
        let xs = Array2::from_shape_fn((7, 6), |(i, j)| ((i * 6 + j) as f64 * 0.37).sin());
        let batch = m.forward_batch(xs.view()).unwrap();
        for i in 0..7 {
            let single = m.forward(&DataVec(xs.row(i).to_vec())).unwrap();
            for k in 0..2 {
                assert!((batch[[i, k]] - single[k]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn loss_examples() {
        let mut rng = RngStream::new(2, 0);
        let m = MlpModel::init(&[3, 4, 2], &mut rng).unwrap();
        let xs = Array2::from_shape_fn((5, 3), |(i, j)| (i as f64 - j as f64) * 0.3);
        let perfect = m.forward_batch(xs.view()).unwrap();
        assert_eq!(loss(&m, xs.view(), perfect.view(), 0.0).unwrap(), 0.0);

        let zero = MlpModel::zeros(&[3, 4, 2]).unwrap();
        let t = array![[1.0, 2.0], [0.0, -1.0], [3.0, 0.0], [0.5, 0.5], [1.0, 1.0]];
        let want = t.rows().into_iter().map(|r| r.dot(&r)).sum::<f64>() / 5.0;
        let got = loss(&zero, xs.view(), t.view(), 0.0).unwrap();
        assert!((got - want).abs() < 1e-12);
    }

    #[test]
    fn penalty_excludes_input_layer_and_biases() {
        let mut rng = RngStream::new(3, 0);
        let m = MlpModel::init(&[3, 4, 4, 2], &mut rng).unwrap();
        let xs = Array2::from_shape_fn((4, 3), |(i, j)| (i + j) as f64 * 0.1);
        let t = Array2::from_shape_fn((4, 2), |(i, j)| i as f64 - j as f64);
        let lam = 0.001;
        let by_hand: f64 = m.weights()[1].iter().chain(m.weights()[2].iter()).map(|v| v * v).sum();
        let diff = loss(&m, xs.view(), t.view(), lam).unwrap() - loss(&m, xs.view(), t.view(), 0.0).unwrap();
        assert!((diff - lam * by_hand).abs() < 1e-12);
    }

    #[test]
    fn penalty_gradient_is_two_lambda_w() {
        let mut rng = RngStream::new(4, 0);
        let m = MlpModel::init(&[3, 5, 5, 2], &mut rng).unwrap();
        let xs = Array2::from_shape_fn((6, 3), |(i, j)| ((i * 3 + j) as f64).cos());
        let t = Array2::from_shape_fn((6, 2), |(i, j)| (i as f64 * 0.2) - j as f64);
        let lam = 0.05;
        let (_, g0) = backprop_gradient(&m, xs.view(), t.view(), 0.0).unwrap();
        let (_, g1) = backprop_gradient(&m, xs.view(), t.view(), lam).unwrap();
        assert_eq!(g1.weights[0], g0.weights[0]);
        for l in 1..3 {
            let d = &g1.weights[l] - &g0.weights[l];
            let expect = &m.weights()[l] * (2.0 * lam);
            for (a, b) in d.iter().zip(expect.iter()) {
                assert!((a - b).abs() < 1e-15);
            }
        }
        assert_eq!(g1.biases, g0.biases);
    }

    #[test]
    fn gradient_vanishes_at_minimum() {
        // q = 1 target equal to the network output everywhere: any
        // parameter setting is a global minimum of the data term.
        let mut rng = RngStream::new(5, 0);
        let m = MlpModel::init(&[2, 3, 1], &mut rng).unwrap();
        let xs = array![[0.3, -0.4], [1.0, 0.2]];
        let t = m.forward_batch(xs.view()).unwrap();
        let (v, g) = backprop_gradient(&m, xs.view(), t.view(), 0.0).unwrap();
        assert_eq!(v, 0.0);
        assert!(g.weights.iter().all(|w| w.iter().all(|&x| x == 0.0)));
        assert!(g.biases.iter().all(|b| b.iter().all(|&x| x == 0.0)));
    }

    #[test]
    fn checkpoint_round_trip_and_schema_error() {
        let mut rng = RngStream::new(6, 0);
        let m = MlpModel::init(&[4, 3, 3, 2], &mut rng).unwrap();
        let meta = CheckpointMeta { l2_lambda: 0.001, seed: 6, training_hash: "abc".into(), ..Default::default() };
        let mut buf = Vec::new();
        m.to_container(&meta).write_to(&mut buf).unwrap();
        let (back, meta_back) = MlpModel::from_container(&Container::read_from(&buf[..]).unwrap()).unwrap();
        assert_eq!(back, m);
        assert_eq!(meta_back, meta);
        for i in 0..100 {
            let x = DataVec((0..4).map(|j| ((i * 4 + j) as f64 * 0.77).sin() * 3.0).collect());
            assert_eq!(back.forward(&x).unwrap(), m.forward(&x).unwrap());
        }
        let mut c = m.to_container(&meta);
        c.set("layer_sizes", vec![4usize, 5, 3, 2]);
        assert!(matches!(
            MlpModel::from_container(&c),
            Err(NnError::Checkpoint(CheckpointError::Schema(_)))
        ));
    }
}
