//! The `abcnet` command line: simulate → train → abc → eval, plus exact
//! oracles.
//!
//! Exit codes: 0 success, 1 other failure (I/O, malformed files),
//! 2 usage error, 3 numerical failure, 4 empty acceptance.

pub mod config;

use std::fs;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

pub use config::{ConfigError, ExperimentConfig, Method, ModelTag};

use crate::abc::{
    abc_reject_exact, AbcError, AbcResult, AbcSidecar, Identity, IsingPosteriorMeanSummary, IsingSufficient,
    Ma2Autocov, ProposalPool, SummaryStatistic,
};
use crate::checkpoint::{CheckpointError, Container};
use crate::dataset::{simulate_split, Dataset, DatasetError};
use crate::eval::{self, EvalError, PosteriorMoments, Table};
use crate::models::ising::{default_theta_grid, ising_sufficient_stat, IsingEnumeration, MAX_ENUMERATION_SIDE};
use crate::models::{ma2_exact_posterior, IsingError, Ma2Error};
use crate::nn::{self, CheckpointMeta, MlpModel, NnError, MLP_KIND};
use crate::rng::{derive_seed, lane, RngStream};
use crate::semiauto::{fit_linear_summary, linear_rmse, LinearSummary, SemiautoError, LINEAR_KIND};
use crate::types::{DataVec, ParamVec, Split};

pub const THREADS_ENV: &str = "ABCNET_THREADS";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("empty acceptance: {0}")]
    EmptyAcceptance(String),
    #[error("{0}")]
    Other(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Other(_) => 1,
            CliError::Usage(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::EmptyAcceptance(_) => 4,
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Usage(e.0)
    }
}

impl From<NnError> for CliError {
    fn from(e: NnError) -> Self {
        match e {
            NnError::Diverged { .. } | NnError::NonFinite => CliError::Numerical(e.to_string()),
            NnError::Config(_) | NnError::InputDim { .. } | NnError::MissingSplit(_) => CliError::Usage(e.to_string()),
            _ => CliError::Other(e.to_string()),
        }
    }
}

impl From<AbcError> for CliError {
    fn from(e: AbcError) -> Self {
        match e {
            AbcError::NoAcceptance { .. } => CliError::EmptyAcceptance(e.to_string()),
            AbcError::Budget { .. } => CliError::Numerical(e.to_string()),
            AbcError::Nn(n) => n.into(),
            AbcError::Semiauto(s) => s.into(),
            AbcError::Io(_) => CliError::Other(e.to_string()),
            _ => CliError::Usage(e.to_string()),
        }
    }
}

impl From<SemiautoError> for CliError {
    fn from(e: SemiautoError) -> Self {
        match e {
            SemiautoError::Singular => CliError::Numerical(e.to_string()),
            SemiautoError::Checkpoint(_) => CliError::Other(e.to_string()),
            _ => CliError::Usage(e.to_string()),
        }
    }
}

impl From<Ma2Error> for CliError {
    fn from(e: Ma2Error) -> Self {
        match e {
            Ma2Error::NotPositiveDefinite { .. } => CliError::Numerical(e.to_string()),
            _ => CliError::Usage(e.to_string()),
        }
    }
}

impl From<IsingError> for CliError {
    fn from(e: IsingError) -> Self {
        CliError::Usage(e.to_string())
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Io(_) | EvalError::Csv(_) => CliError::Other(e.to_string()),
            EvalError::Summary(a) => a.into(),
            _ => CliError::Usage(e.to_string()),
        }
    }
}

impl From<DatasetError> for CliError {
    fn from(e: DatasetError) -> Self {
        CliError::Other(e.to_string())
    }
}

impl From<CheckpointError> for CliError {
    fn from(e: CheckpointError) -> Self {
        CliError::Other(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Other(format!("i/o: {e}"))
    }
}

type CliResult<T = ()> = Result<T, CliError>;

#[derive(Parser, Debug)]
#[command(name = "abcnet", version, about = "ABC rejection sampling with learned summary statistics")]
pub struct Cli {
    /// Worker threads (defaults to $ABCNET_THREADS, then all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Simulate train/validation/test reference tables, or observations.
    Simulate(SimulateArgs),
    /// Fit a DNN, FFNN or semi-automatic summary on a simulated dataset.
    Train(TrainArgs),
    /// Run rejection ABC for one or more observations.
    Abc(AbcArgs),
    /// Exact posterior moments (MA(2) grid, or Ising enumeration for m <= 4).
    Oracle(OracleArgs),
    /// Compute RMSE, posterior-moment, replicate-MSE and monotonicity tables.
    Eval(EvalArgs),
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// Experiment config (TOML).
    #[arg(long, short)]
    pub config: Option<PathBuf>,
    /// Model, when not given by the config.
    #[arg(long, value_enum)]
    pub model: Option<ModelTag>,
    /// Override a config field, e.g. `--set train.epochs=50`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Multiply dataset sizes (0.1 gives N_train = 10^5).
    #[arg(long)]
    pub scale: Option<f64>,
    /// Base seed (same as `--set seed=N`).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory (defaults to the config's output_dir).
    #[arg(long, short)]
    pub out: Option<PathBuf>,
    /// Accept inputs whose recorded config hash differs from this config's.
    #[arg(long)]
    pub force: bool,
}

impl Common {
    fn resolve(&self) -> CliResult<(ExperimentConfig, PathBuf)> {
        let mut overrides = self.overrides.clone();
        if let Some(s) = self.seed {
            overrides.push(format!("seed={s}"));
        }
        let cfg = ExperimentConfig::load(self.config.as_deref(), self.model, &overrides, self.scale)?;
        let out = self.out.clone().unwrap_or_else(|| PathBuf::from(&cfg.output_dir));
        fs::create_dir_all(&out).map_err(|e| CliError::Other(format!("{}: {e}", out.display())))?;
        Ok((cfg, out))
    }
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub common: Common,
    /// Write observations instead: a comma-separated θ, or `prior`.
    #[arg(long)]
    pub observe: Option<String>,
    /// Number of observations written with --observe.
    #[arg(long, default_value_t = 1)]
    pub n_obs: usize,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: Common,
    /// Directory holding train.ds, validation.ds and test.ds.
    #[arg(long)]
    pub data: PathBuf,
    /// Method (defaults to train.method in the config).
    #[arg(long, value_enum)]
    pub method: Option<Method>,
}

#[derive(Args, Debug)]
pub struct AbcArgs {
    #[command(flatten)]
    pub common: Common,
    /// A checkpoint path, or one of: ising-sufficient, ma2-autocov,
    /// exact-posterior-mean, identity.
    #[arg(long)]
    pub summary: String,
    /// Observation file written by `simulate --observe`.
    #[arg(long)]
    pub obs: PathBuf,
    /// Only process this observation.
    #[arg(long)]
    pub index: Option<usize>,
    /// Exact-match rejection (discrete models); accepts ⌈fraction·n_proposals⌉ draws.
    #[arg(long)]
    pub exact: bool,
}

#[derive(Args, Debug)]
pub struct OracleArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub obs: PathBuf,
    /// Also write the full MA(2) posterior grid per observation.
    #[arg(long)]
    pub grid: bool,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[command(flatten)]
    pub common: Common,
    /// oracle.csv written by `oracle`.
    #[arg(long)]
    pub oracle: Option<PathBuf>,
    /// ABC output directory, as LABEL=DIR (repeatable).
    #[arg(long = "draws", value_name = "LABEL=DIR")]
    pub draws: Vec<String>,
    /// Summary to check against S*, as LABEL=SUMMARY (repeatable).
    #[arg(long = "monotonicity", value_name = "LABEL=SUMMARY")]
    pub monotonicity: Vec<String>,
    /// Summary to score by RMSE on the datasets, as LABEL=SUMMARY (repeatable).
    #[arg(long = "rmse", value_name = "LABEL=SUMMARY")]
    pub rmse: Vec<String>,
    /// Dataset directory for --monotonicity and --rmse.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Keep the saturated S* levels in the monotonicity diagnostic.
    #[arg(long)]
    pub include_saturated: bool,
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    if let Err(e) = configure_threads(cli.threads) {
        eprintln!("abcnet: {e}");
        return e.exit_code();
    }
    match run(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("abcnet: {e}");
            e.exit_code()
        }
    }
}

fn configure_threads(flag: Option<usize>) -> CliResult {
    let n = match flag {
        Some(n) => Some(n),
        None => match std::env::var(THREADS_ENV) {
            Ok(v) if !v.trim().is_empty() => Some(
                v.trim()
                    .parse()
                    .map_err(|_| CliError::Usage(format!("{THREADS_ENV}={v} is not a thread count")))?,
            ),
            _ => None,
        },
    };
    if let Some(n) = n {
        if n == 0 {
            return Err(CliError::Usage("thread count must be at least 1".into()));
        }
        // A second initialisation in the same process (tests) is harmless.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(())
}

pub fn run(cmd: Command) -> CliResult {
    match cmd {
        Command::Simulate(a) => cmd_simulate(&a),
        Command::Train(a) => cmd_train(&a),
        Command::Abc(a) => cmd_abc(&a),
        Command::Oracle(a) => cmd_oracle(&a),
        Command::Eval(a) => cmd_eval(&a),
    }
}

fn provenance(cfg: &ExperimentConfig) -> String {
    format!("config_hash={}, seed={}", cfg.hash(), cfg.seed)
}

fn write_table(path: &Path, table: &Table, cfg: &ExperimentConfig) -> CliResult {
    let f = fs::File::create(path).map_err(|e| CliError::Other(format!("{}: {e}", path.display())))?;
    table.write_csv(std::io::BufWriter::new(f), Some(&provenance(cfg)))?;
    log::info!("wrote {}", path.display());
    Ok(())
}

/// Reads `config_hash=...` from the leading `# ...` line of a CSV file.
pub fn csv_config_hash(path: &Path) -> CliResult<Option<String>> {
    let f = fs::File::open(path).map_err(|e| CliError::Other(format!("{}: {e}", path.display())))?;
    let mut first = String::new();
    BufReader::new(f).read_line(&mut first)?;
    Ok(first.strip_prefix('#').and_then(|rest| {
        rest.split(',')
            .filter_map(|kv| kv.trim().strip_prefix("config_hash="))
            .map(str::to_owned)
            .next()
    }))
}

fn check_hash(cfg: &ExperimentConfig, found: Option<&str>, what: &Path, force: bool) -> CliResult {
    let want = cfg.hash();
    match found {
        Some(h) if h == want => Ok(()),
        _ if force => {
            log::warn!("{}: config hash {:?} differs from {want}; continuing (--force)", what.display(), found);
            Ok(())
        }
        Some(h) => Err(CliError::Usage(format!(
            "{} was produced with config hash {h}, current config hashes to {want} (use --force to override)",
            what.display()
        ))),
        None => Err(CliError::Usage(format!(
            "{} records no config hash (use --force to override)",
            what.display()
        ))),
    }
}

fn load_dataset(path: &Path, cfg: &ExperimentConfig, force: bool) -> CliResult<Dataset> {
    let (ds, hash) = Dataset::load_with_hash(path).map_err(|e| CliError::Other(format!("{}: {e}", path.display())))?;
    check_hash(cfg, hash.as_deref(), path, force)?;
    if ds.p() != cfg.data_dim() || ds.q() != cfg.param_dim() {
        return Err(CliError::Usage(format!(
            "{}: dataset has p = {}, q = {}; config expects p = {}, q = {}",
            path.display(),
            ds.p(),
            ds.q(),
            cfg.data_dim(),
            cfg.param_dim()
        )));
    }
    Ok(ds)
}

pub fn split_file(split: Split) -> &'static str {
    match split {
        Split::Train => "train.ds",
        Split::Validation => "validation.ds",
        Split::Test => "test.ds",
    }
}

pub const OBS_FILE: &str = "obs.ds";
pub const ORACLE_FILE: &str = "oracle.csv";

pub fn draws_file(index: usize) -> String {
    format!("draws_{index:04}.csv")
}

fn cmd_simulate(a: &SimulateArgs) -> CliResult {
    let (cfg, out) = a.common.resolve()?;
    let model = cfg.simulator();
    let hash = cfg.hash();
    if let Some(spec) = &a.observe {
        if a.n_obs == 0 {
            return Err(CliError::Usage("--n-obs must be at least 1".into()));
        }
        let fixed = if spec == "prior" {
            None
        } else {
            let theta: Vec<f64> = spec
                .split(',')
                .map(|s| s.trim().parse::<f64>())
                .collect::<Result<_, _>>()
                .map_err(|_| CliError::Usage(format!("--observe: cannot parse θ '{spec}'")))?;
            if theta.len() != cfg.param_dim() || !cfg.prior.contains(&theta) {
                return Err(CliError::Usage(format!("--observe: θ {theta:?} is not in the prior's support")));
            }
            Some(ParamVec(theta))
        };
        let seed = derive_seed(cfg.seed, lane::OBSERVED);
        let pairs: Vec<(ParamVec, DataVec)> = (0..a.n_obs)
            .map(|i| {
                let mut rng = RngStream::new(seed, i as u64);
                let theta = fixed.clone().unwrap_or_else(|| cfg.prior.sample(&mut rng));
                let x = model.simulate(&theta, &mut rng);
                (theta, x)
            })
            .collect();
        let ds = Dataset::new(pairs, vec![Split::Test; a.n_obs], cfg.seed, model.tag())?;
        let path = out.join(OBS_FILE);
        ds.save_with_hash(&path, Some(&hash))?;
        log::info!("wrote {} observations to {}", a.n_obs, path.display());
        return Ok(());
    }
    let sizes = cfg.split_sizes();
    for split in Split::ALL {
        let t = Instant::now();
        let ds = simulate_split(&cfg.prior, model.as_ref(), split, sizes.get(split), cfg.seed)?;
        let path = out.join(split_file(split));
        ds.save_with_hash(&path, Some(&hash))?;
        log::info!("{split}: {} pairs in {:.1}s -> {}", ds.len(), t.elapsed().as_secs_f64(), path.display());
    }
    fs::write(out.join("config.toml"), format!("# {}\n{}", provenance(&cfg), cfg.to_toml()))?;
    Ok(())
}

fn load_splits(dir: &Path, cfg: &ExperimentConfig, force: bool) -> CliResult<Dataset> {
    let parts = Split::ALL
        .iter()
        .map(|&s| load_dataset(&dir.join(split_file(s)), cfg, force))
        .collect::<CliResult<Vec<_>>>()?;
    Ok(Dataset::concat(&parts)?)
}

fn cmd_train(a: &TrainArgs) -> CliResult {
    let (cfg, out) = a.common.resolve()?;
    let method = a.method.unwrap_or(cfg.train.method);
    let data = load_splits(&a.data, &cfg, a.common.force)?;
    let training_hash = format!("{:016x}", data.checksum());
    let mut table = eval::rmse_table(cfg.param_dim());
    let ckpt = out.join(format!("{}.ckpt", method.as_str()));
    match method {
        Method::Semiauto => {
            let t = Instant::now();
            let fit = fit_linear_summary(&data, cfg.basis()?)?;
            let seconds = t.elapsed().as_secs_f64();
            let train = linear_rmse(&fit, &data, Split::Train)?;
            let test = linear_rmse(&fit, &data, Split::Test)?;
            table.push(eval::rmse_row(method.label(), &train, &test, seconds));
            fit.save(
                &ckpt,
                &[
                    ("config_hash", cfg.hash().into()),
                    ("seed", cfg.seed.into()),
                    ("training_hash", training_hash.into()),
                    ("method", method.as_str().into()),
                ],
            )?;
        }
        Method::Dnn | Method::Ffnn => {
            let mut rng = RngStream::new(derive_seed(cfg.seed, lane::INIT), 0);
            let init = MlpModel::init(&cfg.layer_sizes(method), &mut rng)?;
            let tc = cfg.train_config();
            let (model, report) = nn::train(&init, &data, &tc)?;
            let test = report.test_rmse.clone().ok_or(NnError::MissingSplit("test"))?;
            table.push(eval::rmse_row(method.label(), &report.train_rmse, &test, report.wall_time_seconds));
            let meta = CheckpointMeta {
                l2_lambda: tc.l2_lambda,
                seed: cfg.seed,
                training_hash,
                config_hash: Some(cfg.hash()),
                method: Some(method.as_str().into()),
            };
            model.save(&ckpt, &meta)?;
            let loss = out.join(format!("{}_loss.csv", method.as_str()));
            fs::write(&loss, format!("# {}\n{}", provenance(&cfg), report.to_csv()))?;
            log::info!(
                "best epoch {} of {} (val loss {:.6})",
                report.best_epoch,
                report.stopped_epoch,
                report.best_val_loss()
            );
        }
    }
    log::info!("wrote {}", ckpt.display());
    write_table(&out.join(format!("{}_rmse.csv", method.as_str())), &table, &cfg)
}

/// Loads a summary by name or checkpoint path, with the checkpoint's config hash.
pub fn load_summary(spec: &str, cfg: &ExperimentConfig) -> CliResult<(Box<dyn SummaryStatistic>, Option<String>)> {
    let builtin: Option<Box<dyn SummaryStatistic>> = match (spec, cfg.model) {
        ("ising-sufficient", ModelTag::Ising) => Some(Box::new(IsingSufficient { m: cfg.ising.m })),
        ("ma2-autocov", ModelTag::Ma2) => Some(Box::new(Ma2Autocov)),
        ("identity", _) => Some(Box::new(Identity { dim: cfg.data_dim() })),
        ("exact-posterior-mean", ModelTag::Ising) => {
            if cfg.ising.m > MAX_ENUMERATION_SIDE {
                return Err(IsingError::TooLarge(cfg.ising.m).into());
            }
            Some(Box::new(IsingPosteriorMeanSummary::new(cfg.ising.m, &cfg.prior, &default_theta_grid(&cfg.prior))?))
        }
        ("ising-sufficient" | "ma2-autocov" | "exact-posterior-mean", m) => {
            return Err(CliError::Usage(format!("summary '{spec}' does not apply to model {m}")));
        }
        _ => None,
    };
    if let Some(b) = builtin {
        return Ok((b, Some(cfg.hash())));
    }
    let path = Path::new(spec);
    if !path.exists() {
        return Err(CliError::Usage(format!(
            "summary '{spec}' is neither a built-in (ising-sufficient, ma2-autocov, exact-posterior-mean, identity) nor a file"
        )));
    }
    let c = Container::load(path)?;
    let hash = c.header.get("config_hash").and_then(|v| v.as_str()).map(str::to_owned);
    let summary: Box<dyn SummaryStatistic> = match c.kind() {
        Some(MLP_KIND) => Box::new(MlpModel::from_container(&c)?.0),
        Some(LINEAR_KIND) => Box::new(LinearSummary::from_container(&c)?),
        other => return Err(CliError::Other(format!("{spec}: unknown checkpoint kind {other:?}"))),
    };
    Ok((summary, hash))
}

fn load_observations(path: &Path, cfg: &ExperimentConfig, force: bool, index: Option<usize>) -> CliResult<Vec<(usize, DataVec)>> {
    let obs = load_dataset(path, cfg, force)?;
    if obs.is_empty() {
        return Err(CliError::Usage(format!("{}: no observations", path.display())));
    }
    let all: Vec<(usize, DataVec)> = obs.pairs.into_iter().map(|(_, x)| x).enumerate().collect();
    match index {
        None => Ok(all),
        Some(i) if i < all.len() => Ok(vec![all[i].clone()]),
        Some(i) => Err(CliError::Usage(format!("--index {i} out of range ({} observations)", all.len()))),
    }
}

fn cmd_abc(a: &AbcArgs) -> CliResult {
    let (cfg, out) = a.common.resolve()?;
    let model = cfg.simulator();
    let observations = load_observations(&a.obs, &cfg, a.common.force, a.index)?;
    let mut empty = Vec::new();
    if a.exact {
        let n = crate::abc::quantile_count(cfg.abc.fraction, cfg.abc.n_proposals);
        let abc_cfg = cfg.abc_config(1);
        for (i, x) in &observations {
            let r = abc_reject_exact(&cfg.prior, model.as_ref(), x, n, abc_cfg.seed, cfg.abc.exact_budget)?;
            save_draws(&out, *i, &r, None, None, &cfg)?;
        }
        return Ok(());
    }
    let (summary, hash) = load_summary(&a.summary, &cfg)?;
    check_hash(&cfg, hash.as_deref(), Path::new(&a.summary), a.common.force)?;
    let abc_cfg = cfg.abc_config(summary.dim());
    abc_cfg.validate()?;
    let t = Instant::now();
    let pool = ProposalPool::simulate(&cfg.prior, model.as_ref(), &[summary.as_ref()], abc_cfg.n_proposals, abc_cfg.seed)?;
    log::info!("simulated {} proposals in {:.1}s", pool.len(), t.elapsed().as_secs_f64());
    for (i, x) in &observations {
        let s_obs = summary.evaluate(x)?;
        match pool.accept(0, &s_obs, abc_cfg.acceptance_mode, abc_cfg.distance) {
            Ok(r) => save_draws(&out, *i, &r, Some(&abc_cfg), Some(summary.source()), &cfg)?,
            Err(AbcError::NoAcceptance { .. }) => {
                let r = AbcResult { n_proposed: pool.len(), ..AbcResult::empty() };
                save_draws(&out, *i, &r, Some(&abc_cfg), Some(summary.source()), &cfg)?;
                empty.push(*i);
            }
            Err(e) => return Err(e.into()),
        }
    }
    if !empty.is_empty() {
        return Err(CliError::EmptyAcceptance(format!(
            "no draws accepted for observation(s) {empty:?} at tolerance {:?}",
            abc_cfg.acceptance_mode
        )));
    }
    Ok(())
}

fn save_draws(
    out: &Path,
    index: usize,
    r: &AbcResult,
    abc_cfg: Option<&crate::abc::AbcConfig>,
    source: Option<crate::abc::SummarySource>,
    cfg: &ExperimentConfig,
) -> CliResult {
    let mut side = AbcSidecar::new(r, abc_cfg, source, cfg.seed);
    side.config_hash = Some(cfg.hash());
    let path = out.join(draws_file(index));
    r.save(&path, &side)?;
    log::info!("observation {index}: {} accepted -> {}", r.n_accepted, path.display());
    Ok(())
}

fn cmd_oracle(a: &OracleArgs) -> CliResult {
    let (cfg, out) = a.common.resolve()?;
    let observations = load_observations(&a.obs, &cfg, a.common.force, None)?;
    let q = cfg.param_dim();
    let mut header = vec!["observation"];
    header.extend(eval::moment_columns(q));
    let mut table = Table::new(&header);
    match cfg.model {
        ModelTag::Ma2 => {
            for (i, x) in &observations {
                let grid = ma2_exact_posterior(x, cfg.oracle.grid_resolution)?;
                let mut row = eval::moments_row(&i.to_string(), &grid.moments());
                row[0] = i.to_string();
                table.push(row);
                if a.grid {
                    let mut g = Table::new(&["theta1", "theta2", "mass"]);
                    for (&(t1, t2), &w) in grid.nodes.iter().zip(&grid.mass) {
                        if w > 0.0 {
                            g.push(vec![eval::fmt_num(t1), eval::fmt_num(t2), eval::fmt_num(w)]);
                        }
                    }
                    write_table(&out.join(format!("grid_{i:04}.csv")), &g, &cfg)?;
                }
            }
        }
        ModelTag::Ising => {
            let m = cfg.ising.m;
            if m > MAX_ENUMERATION_SIDE {
                return Err(IsingError::TooLarge(m).into());
            }
            let en = IsingEnumeration::new(m)?;
            let grid = default_theta_grid(&cfg.prior);
            let mut per_stat = Table::new(&["S_star", "count", "posterior_mean", "posterior_std"]);
            for (&s, &count) in en.values().iter().zip(en.counts()) {
                let (mean, std) = en.posterior_moments_given_stat(f64::from(s), &cfg.prior, &grid)?;
                per_stat.push(vec![s.to_string(), count.to_string(), eval::fmt_num(mean), eval::fmt_num(std)]);
            }
            write_table(&out.join("posterior_by_stat.csv"), &per_stat, &cfg)?;
            for (i, x) in &observations {
                let s = ising_sufficient_stat(x, m)?;
                let (mean, std) = en.posterior_moments_given_stat(s, &cfg.prior, &grid)?;
                let mo = PosteriorMoments { mean: ParamVec(vec![mean]), std: vec![std], cor: None };
                let mut row = eval::moments_row("", &mo);
                row[0] = i.to_string();
                table.push(row);
            }
        }
    }
    write_table(&out.join(ORACLE_FILE), &table, &cfg)
}

/// Reads accepted θ rows from a draws CSV.
pub fn read_draws(path: &Path) -> CliResult<Vec<ParamVec>> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| CliError::Other(format!("{}: {e}", path.display())))?;
    let headers = rdr.headers().map_err(|e| CliError::Other(format!("{}: {e}", path.display())))?.clone();
    let cols: Vec<usize> = headers
        .iter()
        .enumerate()
        .filter(|(_, h)| h.starts_with("theta"))
        .map(|(i, _)| i)
        .collect();
    if cols.is_empty() {
        return Err(CliError::Other(format!("{}: no theta columns", path.display())));
    }
    let mut draws = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| CliError::Other(format!("{}: {e}", path.display())))?;
        let theta = cols
            .iter()
            .map(|&c| rec.get(c).and_then(|v| v.parse::<f64>().ok()))
            .collect::<Option<Vec<f64>>>()
            .ok_or_else(|| CliError::Other(format!("{}: bad value in row {}", path.display(), k + 1)))?;
        draws.push(ParamVec(theta));
    }
    Ok(draws)
}

/// Reads per-observation exact moments written by `oracle`.
pub fn read_oracle(path: &Path) -> CliResult<Vec<PosteriorMoments>> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| CliError::Other(format!("{}: {e}", path.display())))?;
    let mut out = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| CliError::Other(format!("{}: {e}", path.display())))?;
        let cells: Vec<&str> = rec.iter().skip(1).collect();
        out.push(
            eval::parse_moment_cells(&cells)
                .ok_or_else(|| CliError::Other(format!("{}: malformed row {}", path.display(), k + 1)))?,
        );
    }
    Ok(out)
}

fn split_label(s: &str) -> CliResult<(&str, &str)> {
    s.split_once('=')
        .filter(|(l, v)| !l.is_empty() && !v.is_empty())
        .ok_or_else(|| CliError::Usage(format!("expected LABEL=VALUE, got '{s}'")))
}

fn cmd_eval(a: &EvalArgs) -> CliResult {
    let (cfg, out) = a.common.resolve()?;
    let force = a.common.force;
    let q = cfg.param_dim();
    let mut did_something = false;

    if !a.draws.is_empty() {
        let oracle_path = a
            .oracle
            .as_ref()
            .ok_or_else(|| CliError::Usage("--draws needs --oracle".into()))?;
        check_hash(&cfg, csv_config_hash(oracle_path)?.as_deref(), oracle_path, force)?;
        let exact = read_oracle(oracle_path)?;
        if exact.is_empty() {
            return Err(CliError::Other(format!("{}: empty oracle file", oracle_path.display())));
        }
        if exact[0].mean.len() != q {
            return Err(CliError::Usage(format!("{}: moments have dimension {}, config has q = {q}", oracle_path.display(), exact[0].mean.len())));
        }
        let mut first = eval::moments_table(q);
        first.push(eval::moments_row("Exact", &exact[0]));
        let mut mse = eval::mse_table(q);
        for spec in &a.draws {
            let (label, dir) = split_label(spec)?;
            let mut per_obs = Vec::new();
            for (i, ex) in exact.iter().enumerate() {
                let path = Path::new(dir).join(draws_file(i));
                if !path.exists() {
                    if i == 0 {
                        return Err(CliError::Other(format!("{}: missing", path.display())));
                    }
                    break;
                }
                check_hash(&cfg, csv_config_hash(&path)?.as_deref(), &path, force)?;
                let draws = read_draws(&path)?;
                if draws.is_empty() {
                    return Err(CliError::Other(format!("{}: result file has no accepted draws", path.display())));
                }
                per_obs.push((ex.clone(), eval::moments(&draws)?));
            }
            first.push(eval::moments_row(&format!("ABC ({label})"), &per_obs[0].1));
            if per_obs.len() >= 2 {
                let report = eval::replicate_mse(&per_obs)?;
                mse.push(eval::mse_row(&format!("ABC ({label})"), &report));
            }
        }
        write_table(&out.join("posterior_moments.csv"), &first, &cfg)?;
        if !mse.rows.is_empty() {
            write_table(&out.join("replicate_mse.csv"), &mse, &cfg)?;
        }
        did_something = true;
    }

    if !a.monotonicity.is_empty() || !a.rmse.is_empty() {
        let dir = a.data.as_ref().ok_or_else(|| CliError::Usage("--monotonicity/--rmse need --data".into()))?;
        if !a.monotonicity.is_empty() {
            if cfg.model != ModelTag::Ising {
                return Err(CliError::Usage("--monotonicity applies to the Ising model".into()));
            }
            let test_path = dir.join(split_file(Split::Test));
            let test = load_dataset(&test_path, &cfg, force)?;
            let mut table = Table::new(&["Summary", "Spearman rho", "n_used", "n_excluded"]);
            for spec in &a.monotonicity {
                let (label, s) = split_label(spec)?;
                let (summary, hash) = load_summary(s, &cfg)?;
                check_hash(&cfg, hash.as_deref(), Path::new(s), force)?;
                let r = eval::monotonicity_diagnostic(summary.as_ref(), &test, !a.include_saturated)?;
                table.push(vec![
                    label.to_owned(),
                    eval::fmt_opt(r.rho),
                    r.n_used.to_string(),
                    r.n_excluded.to_string(),
                ]);
                write_table(&out.join(format!("heatmap_{label}.csv")), &eval::heatmap_table(&r), &cfg)?;
            }
            write_table(&out.join("monotonicity.csv"), &table, &cfg)?;
        }
        if !a.rmse.is_empty() {
            let data = load_splits(dir, &cfg, force)?;
            let mut table = eval::rmse_table(q);
            for spec in &a.rmse {
                let (label, s) = split_label(spec)?;
                let (summary, hash) = load_summary(s, &cfg)?;
                check_hash(&cfg, hash.as_deref(), Path::new(s), force)?;
                if summary.dim() != q {
                    return Err(CliError::Usage(format!("summary {label} has dimension {}, q = {q}", summary.dim())));
                }
                let score = |split: Split| -> CliResult<Vec<f64>> {
                    let pairs: Vec<_> = data.split_pairs(split).collect();
                    let xs: Vec<&DataVec> = pairs.iter().map(|(_, x)| x).collect();
                    let preds: Vec<ParamVec> = summary.evaluate_batch(&xs)?.into_iter().map(ParamVec).collect();
                    let targets: Vec<ParamVec> = pairs.iter().map(|(t, _)| t.clone()).collect();
                    Ok(eval::rmse(&preds, &targets)?)
                };
                let mut row = eval::rmse_row(label, &score(Split::Train)?, &score(Split::Test)?, 0.0);
                *row.last_mut().expect("time column") = eval::UNDEFINED.into();
                table.push(row);
            }
            write_table(&out.join("rmse.csv"), &table, &cfg)?;
        }
        did_something = true;
    }

    if !did_something {
        return Err(CliError::Usage("eval needs --draws, --monotonicity or --rmse".into()));
    }
    Ok(())
}
