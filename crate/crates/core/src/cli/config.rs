//! Declarative experiment configuration.
//!
//! A config is a TOML file whose `model` key selects a set of defaults
//! (lattice side 10 or series length 100, datasets of 10^6/10^5/10^5,
//! 200 epochs, 10^6 ABC proposals at 0.1% acceptance). Any field can be
//! overridden with `--set section.key=value`, and `--scale` multiplies the
//! dataset sizes.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::abc::{AbcConfig, AcceptanceMode, DistanceMode, DEFAULT_EXACT_BUDGET};
use crate::dataset::SplitSizes;
use crate::models::ma2::DEFAULT_GRID_RESOLUTION;
use crate::models::{IsingModel, Ma2Model, Simulator};
use crate::nn::{LrSchedule, MlpModel, TrainConfig};
use crate::prior::{PriorSpec, ISING_CRITICAL_THETA};
use crate::rng::{derive_seed, lane, Fnv64};
use crate::semiauto::CandidateBasis;

#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct ConfigError(pub String);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum ModelTag {
    Ising,
    Ma2,
}

impl fmt::Display for ModelTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelTag::Ising => "ising",
            ModelTag::Ma2 => "ma2",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Dnn,
    Ffnn,
    Semiauto,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Dnn => "dnn",
            Method::Ffnn => "ffnn",
            Method::Semiauto => "semiauto",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Method::Dnn => "DNN",
            Method::Ffnn => "FFNN",
            Method::Semiauto => "Semi-automatic",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IsingSection {
    pub m: usize,
    pub burn_in: usize,
    pub sweeps: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Ma2Section {
    pub p: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    pub method: Method,
    pub dnn_hidden_layers: usize,
    pub ffnn_hidden_layers: usize,
    pub width: usize,
    pub epochs: usize,
    pub minibatch_size: usize,
    pub learning_rate: f64,
    /// Halve-style step decay; 0 keeps the rate constant.
    pub lr_decay_every: usize,
    pub lr_decay_factor: f64,
    pub l2_lambda: f64,
    pub early_stopping_patience: usize,
    /// `raw` or `polyD` for powers 1..=D.
    pub semiauto_basis: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistanceChoice {
    Auto,
    Euclidean,
    StandardizedEuclidean,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeChoice {
    Quantile,
    FixedEpsilon,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AbcSection {
    pub n_proposals: usize,
    pub mode: ModeChoice,
    pub fraction: f64,
    pub epsilon: f64,
    pub distance: DistanceChoice,
    pub exact_budget: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleSection {
    pub grid_resolution: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelTag,
    pub seed: u64,
    /// Multiplies the dataset sizes in `[data]`.
    pub scale: f64,
    pub output_dir: String,
    pub ising: IsingSection,
    pub ma2: Ma2Section,
    pub prior: PriorSpec,
    pub data: DataSection,
    pub train: TrainSection,
    pub abc: AbcSection,
    pub oracle: OracleSection,
}

impl ExperimentConfig {
    pub fn defaults(model: ModelTag) -> Self {
        let (prior, basis) = match model {
            ModelTag::Ising => (PriorSpec::ExponentialRate { rate: 1.0 / ISING_CRITICAL_THETA }, "raw"),
            ModelTag::Ma2 => (PriorSpec::UniformTriangleMA2, "poly4"),
        };
        Self {
            model,
            seed: 0,
            scale: 1.0,
            output_dir: "out".into(),
            ising: IsingSection { m: 10, burn_in: crate::models::ising::DEFAULT_BURN_IN, sweeps: 1 },
            ma2: Ma2Section { p: 100 },
            prior,
            data: DataSection { n_train: 1_000_000, n_val: 100_000, n_test: 100_000 },
            train: TrainSection {
                method: Method::Dnn,
                dnn_hidden_layers: 3,
                ffnn_hidden_layers: 1,
                width: 100,
                epochs: 200,
                minibatch_size: 64,
                learning_rate: 0.01,
                lr_decay_every: 50,
                lr_decay_factor: 0.5,
                l2_lambda: 0.0,
                early_stopping_patience: 20,
                semiauto_basis: basis.into(),
            },
            abc: AbcSection {
                n_proposals: 1_000_000,
                mode: ModeChoice::Quantile,
                fraction: 0.001,
                epsilon: 0.0,
                distance: DistanceChoice::Auto,
                exact_budget: DEFAULT_EXACT_BUDGET,
            },
            oracle: OracleSection { grid_resolution: DEFAULT_GRID_RESOLUTION },
        }
    }

    /// Builds a config from optional TOML text, `key=value` overrides and an
    /// optional scale override, then validates it.
    pub fn resolve(
        text: Option<&str>,
        model: Option<ModelTag>,
        overrides: &[String],
        scale: Option<f64>,
    ) -> Result<Self, ConfigError> {
        let user: toml::Table = match text {
            Some(t) => toml::from_str(t).map_err(|e| ConfigError(format!("config: {e}")))?,
            None => toml::Table::new(),
        };
        let mut over = toml::Table::new();
        for kv in overrides {
            let (key, value) = kv
                .split_once('=')
                .ok_or_else(|| ConfigError(format!("override '{kv}' is not key=value")))?;
            set_dotted(&mut over, key.trim(), parse_value(value.trim()))?;
        }
        let pick = |t: &toml::Table| -> Result<Option<ModelTag>, ConfigError> {
            t.get("model")
                .map(|v| {
                    v.clone()
                        .try_into::<ModelTag>()
                        .map_err(|_| ConfigError(format!("model: unknown model {v}")))
                })
                .transpose()
        };
        let model = pick(&over)?
            .or(model)
            .or(pick(&user)?)
            .ok_or_else(|| ConfigError("model: no model given (use --model or `model = ...`)".into()))?;
        let mut merged = toml::Table::try_from(Self::defaults(model)).expect("defaults serialize");
        let prior_given = user.contains_key("prior") || over.contains_key("prior");
        if prior_given {
            merged.remove("prior");
        }
        merge(&mut merged, user);
        merge(&mut merged, over);
        merged.insert("model".into(), toml::Value::try_from(model).expect("tag"));
        if let Some(s) = scale {
            merged.insert("scale".into(), toml::Value::Float(s));
        }
        let cfg: Self = toml::Value::Table(merged)
            .try_into()
            .map_err(|e: toml::de::Error| ConfigError(format!("config: {}", e.message())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(
        path: Option<&Path>,
        model: Option<ModelTag>,
        overrides: &[String],
        scale: Option<f64>,
    ) -> Result<Self, ConfigError> {
        let text = path
            .map(|p| std::fs::read_to_string(p).map_err(|e| ConfigError(format!("config {}: {e}", p.display()))))
            .transpose()?;
        Self::resolve(text.as_deref(), model, overrides, scale)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |field: &str, why: String| Err(ConfigError(format!("{field}: {why}")));
        if !(self.scale > 0.0 && self.scale.is_finite()) {
            return bad("scale", format!("must be positive, got {}", self.scale));
        }
        self.prior.validate().map_err(|e| ConfigError(format!("prior: {e}")))?;
        match (self.model, &self.prior) {
            (ModelTag::Ising, PriorSpec::ExponentialRate { .. }) | (ModelTag::Ma2, PriorSpec::UniformTriangleMA2) => {}
            _ => return bad("prior", format!("prior {:?} does not fit model {}", self.prior, self.model)),
        }
        match self.model {
            ModelTag::Ising => {
                IsingModel::with_schedule(self.ising.m, self.ising.burn_in, self.ising.sweeps)
                    .map_err(|e| ConfigError(format!("ising: {e}")))?;
            }
            ModelTag::Ma2 => {
                Ma2Model::new(self.ma2.p).map_err(|e| ConfigError(format!("ma2.p: {e}")))?;
            }
        }
        let sizes = self.split_sizes();
        for (field, n) in [("data.n_train", sizes.train), ("data.n_val", sizes.validation), ("data.n_test", sizes.test)] {
            if n == 0 {
                return bad(field, "must be at least 1 after scaling".into());
            }
        }
        self.train_config().validate().map_err(|e| ConfigError(format!("train: {e}")))?;
        if self.train.width == 0 || self.train.dnn_hidden_layers == 0 || self.train.ffnn_hidden_layers == 0 {
            return bad("train", "width and hidden layer counts must be at least 1".into());
        }
        self.basis()?;
        self.abc_config(1).validate().map_err(|e| ConfigError(format!("abc: {e}")))?;
        if self.oracle.grid_resolution < 50 {
            return bad("oracle.grid_resolution", "must be at least 50".into());
        }
        Ok(())
    }

    /// Dataset sizes after scaling.
    pub fn split_sizes(&self) -> SplitSizes {
        let s = |n: usize| (n as f64 * self.scale).round() as usize;
        SplitSizes { train: s(self.data.n_train), validation: s(self.data.n_val), test: s(self.data.n_test) }
    }

    pub fn simulator(&self) -> Box<dyn Simulator> {
        match self.model {
            ModelTag::Ising => Box::new(
                IsingModel::with_schedule(self.ising.m, self.ising.burn_in, self.ising.sweeps).expect("validated"),
            ),
            ModelTag::Ma2 => Box::new(Ma2Model::new(self.ma2.p).expect("validated")),
        }
    }

    pub fn data_dim(&self) -> usize {
        match self.model {
            ModelTag::Ising => self.ising.m * self.ising.m,
            ModelTag::Ma2 => self.ma2.p,
        }
    }

    pub fn param_dim(&self) -> usize {
        self.prior.dim()
    }

    pub fn train_config(&self) -> TrainConfig {
        let t = &self.train;
        TrainConfig {
            epochs: t.epochs,
            minibatch_size: t.minibatch_size,
            learning_rate: t.learning_rate,
            lr_schedule: if t.lr_decay_every == 0 {
                LrSchedule::Constant
            } else {
                LrSchedule::StepDecay { every: t.lr_decay_every, factor: t.lr_decay_factor }
            },
            l2_lambda: t.l2_lambda,
            early_stopping_patience: t.early_stopping_patience,
            seed: derive_seed(self.seed, lane::SHUFFLE),
        }
    }

    /// Layer sizes for a network method.
    pub fn layer_sizes(&self, method: Method) -> Vec<usize> {
        let hidden = match method {
            Method::Ffnn => self.train.ffnn_hidden_layers,
            _ => self.train.dnn_hidden_layers,
        };
        MlpModel::architecture(self.data_dim(), hidden, self.train.width, self.param_dim())
    }

    pub fn basis(&self) -> Result<CandidateBasis, ConfigError> {
        parse_basis(&self.train.semiauto_basis)
            .ok_or_else(|| ConfigError(format!("train.semiauto_basis: expected raw or polyD, got '{}'", self.train.semiauto_basis)))
    }

    /// ABC settings for a summary of dimension `summary_dim`.
    pub fn abc_config(&self, summary_dim: usize) -> AbcConfig {
        AbcConfig {
            n_proposals: self.abc.n_proposals,
            acceptance_mode: match self.abc.mode {
                ModeChoice::Quantile => AcceptanceMode::Quantile { fraction: self.abc.fraction },
                ModeChoice::FixedEpsilon => AcceptanceMode::FixedEpsilon { epsilon: self.abc.epsilon },
            },
            distance: match self.abc.distance {
                DistanceChoice::Auto => DistanceMode::default_for(summary_dim),
                DistanceChoice::Euclidean => DistanceMode::Euclidean,
                DistanceChoice::StandardizedEuclidean => DistanceMode::StandardizedEuclidean,
            },
            seed: derive_seed(self.seed, lane::ABC),
        }
    }

    /// FNV-1a hash of the effective config, excluding the output directory.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output_dir.clear();
        let mut h = Fnv64::default();
        h.write(serde_json::to_string(&c).expect("serializable").as_bytes());
        format!("{:016x}", h.finish())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("serializable")
    }
}

pub fn parse_basis(s: &str) -> Option<CandidateBasis> {
    match s {
        "raw" => Some(CandidateBasis::RawComponents),
        _ => {
            let d: u32 = s.strip_prefix("poly")?.parse().ok()?;
            (d >= 1).then_some(CandidateBasis::PolynomialPowers { max_degree: d })
        }
    }
}

fn parse_value(raw: &str) -> toml::Value {
    match toml::from_str::<toml::Table>(&format!("v = {raw}")) {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => toml::Value::String(raw.to_owned()),
    }
}

fn set_dotted(table: &mut toml::Table, key: &str, value: toml::Value) -> Result<(), ConfigError> {
    let mut parts: Vec<&str> = key.split('.').collect();
    let last = parts.pop().filter(|s| !s.is_empty()).ok_or_else(|| ConfigError(format!("empty key in '{key}'")))?;
    let mut cur = table;
    for p in parts {
        cur = cur
            .entry(p)
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(|| ConfigError(format!("{key}: '{p}' is not a section")))?;
    }
    cur.insert(last.into(), value);
    Ok(())
}

fn merge(base: &mut toml::Table, over: toml::Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}
