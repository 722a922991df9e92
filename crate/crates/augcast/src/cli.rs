//! Batch command line: series augmentation, random hyperparameter search,
//! training, forecasting, scoring, and the full strategy-comparison
//! experiment with deterministic report files.
//!
//! Exit codes: 0 on success, 1 for configuration errors (bad flags, missing
//! or malformed inputs), 2 when at least one strategy fails at runtime.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::augment::{generate, AugmentConfig, Method};
use crate::data::{
    load_dataset, split_holdout, write_series_csv, Dataset, DatasetMeta, TimeSeries,
};
use crate::error::{Error, Result};
use crate::eval::{
    aggregate, average_ranks, mase, smape, smape_modified, stat_report, ErrorMatrix,
    DEFAULT_SMAPE_EPSILON, SMALL_MAGNITUDE,
};
use crate::net::{train, Checkpoint, Hyperparameters, Network};
use crate::pipeline::preprocess;
use crate::transfer::{
    forecast_all, median_ensemble, network_input_width, pretrain_base, run_single,
    seeded_network, Scheme, Strategy,
};

/// Significance level used for the separator line in `stats.txt`.
const ALPHA: f64 = 0.05;

/// Per-series forecasts on the original scale, one vector per series.
type Forecasts = BTreeMap<String, Vec<f64>>;

// ---------------------------------------------------------------------------
// Argument grammar
// ---------------------------------------------------------------------------

#[derive(Parser)]
#[command(
    name = "augcast",
    version,
    about = "Global LSTM forecasting with series augmentation and transfer learning"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic series and write them in the long CSV format.
    Augment(AugmentArgs),
    /// Random search over the training settings; prints the best as JSON.
    Tune(TuneArgs),
    /// Train one model on the original series and save a checkpoint.
    Train(TrainArgs),
    /// Forecast every series from a saved checkpoint.
    Forecast(ForecastArgs),
    /// Score a forecast file against the held-out tail of a dataset.
    Evaluate(EvaluateArgs),
    /// Run the strategy comparison and write the report files.
    Experiment(ExperimentArgs),
}

#[derive(Args)]
struct DataArgs {
    /// Series CSV with header `series_id,t,value`.
    #[arg(long)]
    dataset: PathBuf,
    /// Dataset metadata file (TOML).
    #[arg(long)]
    meta: PathBuf,
}

impl DataArgs {
    fn load(&self) -> Result<Dataset> {
        let meta = DatasetMeta::load(&self.meta)?;
        load_dataset(&self.dataset, &meta)
    }
}

#[derive(Args)]
struct AugmentArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Generation method: MBB, DBA, or GRATIS.
    #[arg(long)]
    method: Method,
    /// Synthetic series generated per original series.
    #[arg(long, default_value_t = 10)]
    per_series: usize,
    /// Fixed total number of synthetic series (overrides --per-series).
    #[arg(long)]
    total: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Remainder block length (default: seasonality-derived).
    #[arg(long)]
    block_length: Option<usize>,
    /// Barycenter refinement iterations.
    #[arg(long, default_value_t = 10)]
    dba_iters: usize,
    /// Mixture components of the autoregressive generator.
    #[arg(long, default_value_t = 4)]
    mar_components: usize,
    /// Output CSV path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TuneArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Number of candidates to sample.
    #[arg(long, default_value_t = 20)]
    budget: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Tune on every observation instead of setting the final horizon aside.
    #[arg(long)]
    full_series: bool,
    /// Write the selected settings as JSON here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Training settings as JSON (defaults to mid-range values).
    #[arg(long)]
    hp: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Train on every observation instead of setting the final horizon aside.
    #[arg(long)]
    full_series: bool,
    /// Checkpoint output path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ForecastArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Checkpoint produced by `train`.
    #[arg(long)]
    checkpoint: PathBuf,
    /// Label written to the strategy column.
    #[arg(long, default_value = "model")]
    strategy: String,
    /// Forecast from the full series instead of the pre-holdout portion.
    #[arg(long)]
    full_series: bool,
    /// Forecast CSV output path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Forecast CSV (`strategy,series_id,h,value`) covering the held-out tail.
    #[arg(long)]
    forecasts: PathBuf,
    /// Offset added to the small-denominator floor of the modified sMAPE.
    #[arg(long = "epsilon-smape", default_value_t = DEFAULT_SMAPE_EPSILON)]
    epsilon_smape: f64,
    /// Which sMAPE variant to report.
    #[arg(long, value_enum, default_value_t = SmapeVariant::Auto)]
    smape: SmapeVariant,
    /// Output directory for metrics.csv, ranks.csv, and stats.txt.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ExperimentArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Strategy names to run (repeatable); defaults to all 21 variants.
    #[arg(long = "strategy")]
    strategies: Vec<Strategy>,
    /// Single-variant selection: generation method (MBB, DBA, GRATIS).
    #[arg(long)]
    method: Option<Method>,
    /// Single-variant selection: transfer scheme (Dense, AddDense, LSTM).
    #[arg(long)]
    scheme: Option<Scheme>,
    /// Single-variant selection: Freeze or Retrain.
    #[arg(long)]
    mode: Option<crate::transfer::Mode>,
    /// Single-variant selection: number of appended layers.
    #[arg(long)]
    q: Option<usize>,
    /// Number of training seeds (0, 1, ...).
    #[arg(long, default_value_t = 10)]
    seeds: usize,
    /// Number of generator seeds for synthetic data (0, 1, ...).
    #[arg(long = "gen-seeds", default_value_t = 3)]
    gen_seeds: usize,
    /// Fixed training settings as JSON; disables the random search.
    #[arg(long)]
    hp: Option<PathBuf>,
    /// Random-search budget used when --hp is absent.
    #[arg(long, default_value_t = 20)]
    budget: usize,
    /// Seed of the random search.
    #[arg(long, default_value_t = 0)]
    tune_seed: u64,
    /// Synthetic series generated per original series.
    #[arg(long, default_value_t = 10)]
    per_series: usize,
    /// Fixed total number of synthetic series (overrides --per-series).
    #[arg(long)]
    total: Option<usize>,
    /// Remainder block length (default: seasonality-derived).
    #[arg(long)]
    block_length: Option<usize>,
    /// Barycenter refinement iterations.
    #[arg(long, default_value_t = 10)]
    dba_iters: usize,
    /// Mixture components of the autoregressive generator.
    #[arg(long, default_value_t = 4)]
    mar_components: usize,
    /// Offset added to the small-denominator floor of the modified sMAPE.
    #[arg(long = "epsilon-smape", default_value_t = DEFAULT_SMAPE_EPSILON)]
    epsilon_smape: f64,
    /// Which sMAPE variant to report.
    #[arg(long, value_enum, default_value_t = SmapeVariant::Auto)]
    smape: SmapeVariant,
    /// Output directory for the report files.
    #[arg(long)]
    out: PathBuf,
}

impl ExperimentArgs {
    fn into_config(self) -> Result<ExperimentConfig> {
        let strategies = self.select_strategies()?;
        let hp_source = match &self.hp {
            Some(path) => HpSource::Fixed(load_hyperparameters(path)?),
            None => HpSource::Search { budget: self.budget, seed: self.tune_seed },
        };
        Ok(ExperimentConfig {
            dataset_path: self.data.dataset,
            meta_path: self.data.meta,
            strategies,
            training_seeds: self.seeds,
            generator_seeds: self.gen_seeds,
            hp_source,
            per_series: self.per_series,
            total: self.total,
            block_length: self.block_length,
            dba_iterations: self.dba_iters,
            mar_components: self.mar_components,
            epsilon_smape: self.epsilon_smape,
            smape: self.smape,
            out_dir: self.out,
        })
    }

    /// Either an explicit `--strategy` list, a single variant assembled from
    /// `--method`/`--scheme`/`--mode`/`--q`, or all 21 variants.
    fn select_strategies(&self) -> Result<Vec<Strategy>> {
        if !self.strategies.is_empty() {
            if self.method.is_some() || self.scheme.is_some() || self.mode.is_some() {
                return Err(Error::Config(
                    "--strategy cannot be combined with --method/--scheme/--mode".into(),
                ));
            }
            return Ok(self.strategies.clone());
        }
        match self.method {
            Some(method) => match self.scheme {
                Some(scheme) => {
                    let mode = self.mode.ok_or_else(|| {
                        Error::Config("--scheme also needs --mode".into())
                    })?;
                    let q = self.q.unwrap_or_else(|| Strategy::default_q(scheme));
                    Ok(vec![Strategy::transfer(method, scheme, mode, q)?])
                }
                None if self.mode.is_some() || self.q.is_some() => Err(Error::Config(
                    "--mode/--q only make sense together with --scheme".into(),
                )),
                None => Ok(vec![Strategy::pooled(method)?]),
            },
            None if self.scheme.is_some() || self.mode.is_some() || self.q.is_some() => Err(
                Error::Config("--scheme/--mode/--q need --method".into()),
            ),
            None => Ok(Strategy::all(
                Strategy::default_q(Scheme::AddDense),
                Strategy::default_q(Scheme::Lstm),
            )),
        }
    }
}

/// Which sMAPE variant the reports use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SmapeVariant {
    /// Modified when any held-out or forecast magnitude is below 0.5.
    Auto,
    Plain,
    Modified,
}

// ---------------------------------------------------------------------------
// Entry points
// ---------------------------------------------------------------------------

/// Runs the command line and returns the process exit code.
pub fn run() -> i32 {
    run_with(std::env::args_os())
}

/// Same as [`run`] with explicit arguments (the first one is the program
/// name), so tests can drive the command line in-process.
pub fn run_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let result = match cli.command {
        Command::Augment(args) => cmd_augment(args),
        Command::Tune(args) => cmd_tune(args),
        Command::Train(args) => cmd_train(args),
        Command::Forecast(args) => cmd_forecast(args),
        Command::Evaluate(args) => cmd_evaluate(args),
        Command::Experiment(args) => cmd_experiment(args),
    };
    match result {
        Ok(code) => code,
        // Everything that escapes a handler happened before any real work.
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

/// Maps failures that occur after configuration was accepted to exit code 2.
fn runtime(result: Result<()>) -> i32 {
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}

fn cmd_augment(args: AugmentArgs) -> Result<i32> {
    let dataset = args.data.load()?;
    let mut cfg = AugmentConfig::new(args.method)
        .with_per_series(args.per_series)
        .with_seed(args.seed)
        .with_dba_iterations(args.dba_iters)
        .with_mar_components(args.mar_components);
    if let Some(total) = args.total {
        cfg = cfg.with_total(total);
    }
    if let Some(block) = args.block_length {
        cfg = cfg.with_block_length(block);
    }
    cfg.validate()?;
    Ok(runtime((|| {
        let synthetic = generate(&dataset, &cfg)?;
        write_series_csv(&args.out, &synthetic)?;
        println!("wrote {} synthetic series to {}", synthetic.len(), args.out.display());
        Ok(())
    })()))
}

fn cmd_tune(args: TuneArgs) -> Result<i32> {
    if args.budget < 1 {
        return Err(Error::Config("search budget must be at least 1".into()));
    }
    let full = args.data.load()?;
    let dataset = if args.full_series { full } else { split_holdout(&full)?.0 };
    Ok(runtime((|| {
        let (hp, score) = tune(&dataset, args.budget, args.seed)?;
        let json = serde_json::to_string_pretty(&hp)
            .map_err(|e| Error::Numeric(format!("cannot serialize settings: {e}")))?;
        eprintln!("best validation error: {score:.6}");
        match &args.out {
            Some(path) => fs::write(path, json + "\n")?,
            None => println!("{json}"),
        }
        Ok(())
    })()))
}

fn cmd_train(args: TrainArgs) -> Result<i32> {
    let full = args.data.load()?;
    let dataset = if args.full_series { full } else { split_holdout(&full)?.0 };
    let hp = match &args.hp {
        Some(path) => load_hyperparameters(path)?,
        None => Hyperparameters::default(),
    };
    hp.validate()?;
    Ok(runtime((|| {
        let (_, windows) = preprocess(&dataset)?;
        let net = seeded_network(network_input_width(&windows)?, dataset.horizon, &hp, args.seed)?;
        let outcome = train(&net, &windows, &hp, args.seed)?;
        eprintln!(
            "best epoch {} of {} (validation error {:.6})",
            outcome.best_epoch + 1,
            outcome.validation_history.len(),
            outcome.validation_history[outcome.best_epoch]
        );
        Checkpoint::new(hp, outcome.network).save(&args.out)?;
        println!("wrote checkpoint to {}", args.out.display());
        Ok(())
    })()))
}

fn cmd_forecast(args: ForecastArgs) -> Result<i32> {
    let full = args.data.load()?;
    let dataset = if args.full_series { full } else { split_holdout(&full)?.0 };
    let checkpoint = Checkpoint::load(&args.checkpoint)?;
    let (states, windows) = preprocess(&dataset)?;
    let width = network_input_width(&windows)?;
    if checkpoint.network.input_dim() != width {
        return Err(Error::Config(format!(
            "checkpoint expects inputs of width {} but this dataset produces {}",
            checkpoint.network.input_dim(),
            width
        )));
    }
    if checkpoint.network.output_dim() != dataset.horizon {
        return Err(Error::Config(format!(
            "checkpoint forecasts {} steps but the dataset horizon is {}",
            checkpoint.network.output_dim(),
            dataset.horizon
        )));
    }
    Ok(runtime((|| {
        let forecasts = forecast_all(&checkpoint.network, &states, &windows)?;
        let rows = write_forecasts_csv(&args.out, &[(args.strategy.clone(), &forecasts)])?;
        println!("wrote {rows} forecast rows to {}", args.out.display());
        Ok(())
    })()))
}

fn cmd_evaluate(args: EvaluateArgs) -> Result<i32> {
    let full = args.data.load()?;
    let (train_ds, holdout) = split_holdout(&full)?;
    let (order, by_strategy) = read_forecasts_csv(&args.forecasts)?;
    for (strategy, forecasts) in &by_strategy {
        for id in holdout.keys() {
            let forecast = forecasts.get(id).ok_or_else(|| {
                Error::Validation(format!("strategy {strategy:?} has no forecast for series {id:?}"))
            })?;
            if forecast.len() != full.horizon {
                return Err(Error::Validation(format!(
                    "strategy {strategy:?} forecasts {} steps for series {id:?}; expected {}",
                    forecast.len(),
                    full.horizon
                )));
            }
        }
    }
    Ok(runtime((|| {
        let use_modified = match args.smape {
            SmapeVariant::Plain => false,
            SmapeVariant::Modified => true,
            SmapeVariant::Auto => {
                any_small(holdout.values())
                    || by_strategy.values().any(|f| any_small(f.values()))
            }
        };
        let metric = smape_metric_name(use_modified);
        let mut scores = BTreeMap::new();
        for (strategy, forecasts) in &by_strategy {
            scores.insert(
                strategy.clone(),
                score_single(forecasts, &holdout, &train_ds, use_modified, args.epsilon_smape)?,
            );
        }
        fs::create_dir_all(&args.out)?;
        write_reports(&args.out, &full.name, metric, &order, &scores)?;
        println!("metric: {metric}");
        println!("wrote reports to {}", args.out.display());
        Ok(())
    })()))
}

fn cmd_experiment(args: ExperimentArgs) -> Result<i32> {
    let cfg = args.into_config()?;
    cfg.validate()?;
    // Probe the inputs now so bad paths stay configuration errors.
    let meta = DatasetMeta::load(&cfg.meta_path)?;
    load_dataset(&cfg.dataset_path, &meta)?;
    let outcome = match run_experiment(&cfg) {
        Ok(outcome) => outcome,
        Err(e) => {
            eprintln!("error: {e}");
            return Ok(2);
        }
    };
    println!("metric: {}", outcome.smape_metric);
    for name in &outcome.strategy_order {
        if let Some(series) = outcome.errors.get(name) {
            let n = series.len() as f64;
            let mean_smape = series.values().map(|s| s.smape).sum::<f64>() / n;
            let mean_mase = series.values().map(|s| s.mase).sum::<f64>() / n;
            println!("{name:<24} {} {mean_smape:.6}  mase {mean_mase:.6}", outcome.smape_metric);
        } else if let Some(message) = outcome.failures.get(name) {
            println!("{name:<24} FAILED: {message}");
        }
    }
    println!("wrote reports to {}", cfg.out_dir.display());
    Ok(if outcome.failures.is_empty() { 0 } else { 2 })
}

// ---------------------------------------------------------------------------
// Hyperparameter search
// ---------------------------------------------------------------------------

/// Draws one candidate from the search space: integers uniform on their
/// closed ranges, reals log-uniform on theirs.
pub fn sample_hyperparameters<R: Rng>(rng: &mut R) -> Hyperparameters {
    fn int<R: Rng>(rng: &mut R, range: (usize, usize)) -> usize {
        rng.random_range(range.0..=range.1)
    }
    fn log_uniform<R: Rng>(rng: &mut R, range: (f64, f64)) -> f64 {
        rng.random_range(range.0.ln()..=range.1.ln())
            .exp()
            .clamp(range.0, range.1)
    }
    Hyperparameters {
        cell_dim: int(rng, Hyperparameters::CELL_DIM),
        minibatch: int(rng, Hyperparameters::MINIBATCH),
        epoch_size: int(rng, Hyperparameters::EPOCH_SIZE),
        max_epochs: int(rng, Hyperparameters::MAX_EPOCHS),
        layers: int(rng, Hyperparameters::LAYERS),
        noise_std: log_uniform(rng, Hyperparameters::REAL_PARAMS),
        init_std: log_uniform(rng, Hyperparameters::REAL_PARAMS),
        l2_weight: log_uniform(rng, Hyperparameters::REAL_PARAMS),
    }
}

/// Seeded random search: trains one model per candidate on the original
/// series and returns the settings with the lowest best-epoch validation
/// error, together with that error. Earlier candidates win ties.
pub fn tune(dataset: &Dataset, budget: usize, seed: u64) -> Result<(Hyperparameters, f64)> {
    if budget < 1 {
        return Err(Error::Config("search budget must be at least 1".into()));
    }
    let (_, windows) = preprocess(dataset)?;
    let width = network_input_width(&windows)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<(Hyperparameters, f64)> = None;
    for _ in 0..budget {
        let hp = sample_hyperparameters(&mut rng);
        let net = seeded_network(width, dataset.horizon, &hp, seed)?;
        let outcome = train(&net, &windows, &hp, seed)?;
        let score = outcome.validation_history[outcome.best_epoch];
        if best.as_ref().map_or(true, |(_, b)| score < *b) {
            best = Some((hp, score));
        }
    }
    Ok(best.expect("budget >= 1 always yields a candidate"))
}

// ---------------------------------------------------------------------------
// Experiment configuration
// ---------------------------------------------------------------------------

/// Where training settings come from.
#[derive(Debug, Clone)]
pub enum HpSource {
    Fixed(Hyperparameters),
    Search { budget: usize, seed: u64 },
}

/// One experiment invocation; identical configurations produce byte-identical
/// report files.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub dataset_path: PathBuf,
    pub meta_path: PathBuf,
    pub strategies: Vec<Strategy>,
    /// Training seeds 0, 1, ... per strategy; the forecasts are their median.
    pub training_seeds: usize,
    /// Generator seeds 0, 1, ... for synthetic data; errors are their mean.
    pub generator_seeds: usize,
    pub hp_source: HpSource,
    pub per_series: usize,
    pub total: Option<usize>,
    pub block_length: Option<usize>,
    pub dba_iterations: usize,
    pub mar_components: usize,
    pub epsilon_smape: f64,
    pub smape: SmapeVariant,
    pub out_dir: PathBuf,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.strategies.is_empty() {
            return Err(Error::Config("no strategies requested".into()));
        }
        let mut names = BTreeSet::new();
        for strategy in &self.strategies {
            if !names.insert(strategy.to_string()) {
                return Err(Error::Config(format!("strategy {strategy} requested twice")));
            }
        }
        if self.training_seeds < 1 {
            return Err(Error::Config("at least one training seed is required".into()));
        }
        if self.generator_seeds < 1 {
            return Err(Error::Config("at least one generator seed is required".into()));
        }
        if let HpSource::Search { budget, .. } = self.hp_source {
            if budget < 1 {
                return Err(Error::Config("search budget must be at least 1".into()));
            }
        }
        if let HpSource::Fixed(hp) = &self.hp_source {
            hp.validate()?;
        }
        if !(self.epsilon_smape >= 0.0) {
            return Err(Error::Config(format!(
                "epsilon-smape must be non-negative, got {}",
                self.epsilon_smape
            )));
        }
        for method in self.augmentation_methods() {
            self.augment_config(method, 0).validate()?;
        }
        Ok(())
    }

    fn augmentation_methods(&self) -> BTreeSet<Method> {
        self.strategies
            .iter()
            .filter(|s| s.needs_augmentation())
            .filter_map(Strategy::method)
            .collect()
    }

    fn augment_config(&self, method: Method, seed: u64) -> AugmentConfig {
        let mut cfg = AugmentConfig::new(method)
            .with_per_series(self.per_series)
            .with_seed(seed)
            .with_dba_iterations(self.dba_iterations)
            .with_mar_components(self.mar_components);
        if let Some(total) = self.total {
            cfg = cfg.with_total(total);
        }
        if let Some(block) = self.block_length {
            cfg = cfg.with_block_length(block);
        }
        cfg
    }

    /// Canonical one-line-per-field rendering; its SHA-256 is the config hash
    /// recorded in the manifest.
    fn canonical_description(&self) -> String {
        let strategies: Vec<String> = self.strategies.iter().map(|s| s.to_string()).collect();
        let hp_source = match &self.hp_source {
            HpSource::Fixed(hp) => format!(
                "fixed:{}",
                serde_json::to_string(hp).expect("settings serialize")
            ),
            HpSource::Search { budget, seed } => format!("search:budget={budget},seed={seed}"),
        };
        let mut s = String::new();
        let _ = writeln!(s, "dataset_path={}", self.dataset_path.display());
        let _ = writeln!(s, "meta_path={}", self.meta_path.display());
        let _ = writeln!(s, "strategies={}", strategies.join(","));
        let _ = writeln!(s, "training_seeds={}", self.training_seeds);
        let _ = writeln!(s, "generator_seeds={}", self.generator_seeds);
        let _ = writeln!(s, "hp_source={hp_source}");
        let _ = writeln!(s, "per_series={}", self.per_series);
        let _ = writeln!(s, "total={:?}", self.total);
        let _ = writeln!(s, "block_length={:?}", self.block_length);
        let _ = writeln!(s, "dba_iterations={}", self.dba_iterations);
        let _ = writeln!(s, "mar_components={}", self.mar_components);
        let _ = writeln!(s, "epsilon_smape={}", self.epsilon_smape);
        let _ = writeln!(s, "smape={:?}", self.smape);
        let _ = writeln!(s, "out_dir={}", self.out_dir.display());
        s
    }

    fn config_hash(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(self.canonical_description().as_bytes());
        hasher
            .finalize()
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

/// Per-series forecast errors, averaged over generator seeds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeriesScore {
    pub smape: f64,
    pub mase: f64,
}

/// Everything the experiment produced besides the files on disk.
#[derive(Debug)]
pub struct ExperimentOutcome {
    /// Settings every strategy was trained with.
    pub hyperparameters: Hyperparameters,
    /// `"smape"` or `"smape_modified"`, after auto-selection.
    pub smape_metric: String,
    /// Strategy names in the order they were run.
    pub strategy_order: Vec<String>,
    /// Per-strategy, per-series errors for every strategy that completed.
    pub errors: BTreeMap<String, BTreeMap<String, SeriesScore>>,
    /// Error message per strategy that did not complete.
    pub failures: BTreeMap<String, String>,
}

// ---------------------------------------------------------------------------
// Experiment driver
// ---------------------------------------------------------------------------

type Isolated<T> = std::result::Result<T, String>;

/// Runs the configured strategies end to end and writes `forecasts.csv`,
/// `metrics.csv`, `ranks.csv`, `stats.txt`, `manifest.txt`, and `errors.log`
/// into the output directory. Failures of individual strategies are recorded
/// and never disturb the remaining strategies.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutcome> {
    cfg.validate()?;
    let meta = DatasetMeta::load(&cfg.meta_path)?;
    let full = load_dataset(&cfg.dataset_path, &meta)?;
    let (train_ds, holdout) = split_holdout(&full)?;
    fs::create_dir_all(&cfg.out_dir)?;

    let hp = match &cfg.hp_source {
        HpSource::Fixed(hp) => hp.clone(),
        HpSource::Search { budget, seed } => {
            eprintln!("searching {budget} candidate settings...");
            tune(&train_ds, *budget, *seed)?.0
        }
    };
    let seeds: Vec<u64> = (0..cfg.training_seeds as u64).collect();
    let gen_seeds: Vec<u64> = (0..cfg.generator_seeds as u64).collect();

    // Synthetic pools, one per (method, generator seed).
    let pool_jobs: Vec<(Method, u64)> = cfg
        .augmentation_methods()
        .into_iter()
        .flat_map(|m| gen_seeds.iter().map(move |&g| (m, g)))
        .collect();
    let pool_results: Vec<Isolated<Vec<TimeSeries>>> = pool_jobs
        .par_iter()
        .map(|&(method, g)| {
            generate(&train_ds, &cfg.augment_config(method, g)).map_err(|e| e.to_string())
        })
        .collect();
    let pools: BTreeMap<(Method, u64), Isolated<Vec<TimeSeries>>> =
        pool_jobs.into_iter().zip(pool_results).collect();

    // Pre-trained bases, one per (method, generator seed, training seed),
    // shared by all transfer variants of the same method.
    let transfer_methods: BTreeSet<Method> = cfg
        .strategies
        .iter()
        .filter_map(|s| match s {
            Strategy::Transfer { method, .. } => Some(*method),
            _ => None,
        })
        .collect();
    let mut base_jobs: Vec<(Method, u64, u64)> = Vec::new();
    for &method in &transfer_methods {
        for &g in &gen_seeds {
            if matches!(pools.get(&(method, g)), Some(Ok(_))) {
                for &seed in &seeds {
                    base_jobs.push((method, g, seed));
                }
            }
        }
    }
    let base_results: Vec<Isolated<Network>> = base_jobs
        .par_iter()
        .map(|&(method, g, seed)| {
            let pool = pools[&(method, g)].as_ref().expect("job filtered on ok pools");
            pretrain_base(&train_ds, pool, &hp, seed).map_err(|e| e.to_string())
        })
        .collect();
    let bases: BTreeMap<(Method, u64, u64), Isolated<Network>> =
        base_jobs.into_iter().zip(base_results).collect();

    // Forecast phase: per strategy, one forecast map per generator seed.
    let mut runs: Vec<(String, Isolated<Vec<Forecasts>>)> = Vec::new();
    for (index, strategy) in cfg.strategies.iter().enumerate() {
        let result = match strategy {
            Strategy::Baseline => {
                run_over_seeds(strategy, &train_ds, &[], &hp, &seeds, None).map(|f| vec![f])
            }
            Strategy::Pooled { method } => gen_seeds
                .iter()
                .map(|&g| match &pools[&(*method, g)] {
                    Ok(pool) => run_over_seeds(strategy, &train_ds, pool, &hp, &seeds, None),
                    Err(e) => Err(format!("augmentation (generator seed {g}) failed: {e}")),
                })
                .collect(),
            Strategy::Transfer { method, .. } => gen_seeds
                .iter()
                .map(|&g| match &pools[&(*method, g)] {
                    Ok(pool) => run_over_seeds(
                        strategy,
                        &train_ds,
                        pool,
                        &hp,
                        &seeds,
                        Some((&bases, *method, g)),
                    ),
                    Err(e) => Err(format!("augmentation (generator seed {g}) failed: {e}")),
                })
                .collect(),
        };
        let name = strategy.to_string();
        eprintln!(
            "[{}/{}] {name}: {}",
            index + 1,
            cfg.strategies.len(),
            if result.is_ok() { "done" } else { "failed" }
        );
        runs.push((name, result));
    }

    // Metric selection, then scoring.
    let use_modified = match cfg.smape {
        SmapeVariant::Plain => false,
        SmapeVariant::Modified => true,
        SmapeVariant::Auto => {
            any_small(holdout.values())
                || runs.iter().any(|(_, r)| {
                    r.as_ref()
                        .map(|gens| gens.iter().any(|f| any_small(f.values())))
                        .unwrap_or(false)
                })
        }
    };
    let metric = smape_metric_name(use_modified);

    let mut errors: BTreeMap<String, BTreeMap<String, SeriesScore>> = BTreeMap::new();
    let mut failures: BTreeMap<String, String> = BTreeMap::new();
    for (name, result) in &runs {
        match result {
            Err(e) => {
                failures.insert(name.clone(), e.clone());
            }
            Ok(gens) => {
                match score_generator_average(gens, &holdout, &train_ds, use_modified, cfg.epsilon_smape)
                {
                    Ok(scores) => {
                        errors.insert(name.clone(), scores);
                    }
                    Err(e) => {
                        failures.insert(name.clone(), format!("scoring failed: {e}"));
                    }
                }
            }
        }
    }

    // Report files.
    let order: Vec<String> = runs
        .iter()
        .map(|(name, _)| name.clone())
        .filter(|name| errors.contains_key(name))
        .collect();
    let forecast_entries: Vec<(String, &Forecasts)> = runs
        .iter()
        .filter_map(|(name, r)| match r {
            Ok(gens) if errors.contains_key(name) => Some((name.clone(), &gens[0])),
            _ => None,
        })
        .collect();
    write_forecasts_csv(&cfg.out_dir.join("forecasts.csv"), &forecast_entries)?;
    write_reports(&cfg.out_dir, &full.name, metric, &order, &errors)?;
    write_manifest(&cfg.out_dir.join("manifest.txt"), cfg, &train_ds, &hp, metric)?;
    let mut log = String::new();
    for (name, _) in &runs {
        if let Some(message) = failures.get(name) {
            let _ = writeln!(log, "{name}: {message}");
        }
    }
    fs::write(cfg.out_dir.join("errors.log"), log)?;

    Ok(ExperimentOutcome {
        hyperparameters: hp,
        smape_metric: metric.to_string(),
        strategy_order: runs.into_iter().map(|(name, _)| name).collect(),
        errors,
        failures,
    })
}

/// Trains one strategy across all training seeds (in parallel) and returns
/// the per-series median forecast. Seed failures are reported for the lowest
/// failing seed so reruns produce identical messages.
fn run_over_seeds(
    strategy: &Strategy,
    original: &Dataset,
    pool: &[TimeSeries],
    hp: &Hyperparameters,
    seeds: &[u64],
    bases: Option<(&BTreeMap<(Method, u64, u64), Isolated<Network>>, Method, u64)>,
) -> Isolated<Forecasts> {
    let per_seed: Vec<Isolated<Forecasts>> = seeds
        .par_iter()
        .map(|&seed| {
            let pretrained = match bases {
                None => None,
                Some((map, method, g)) => Some(
                    map[&(method, g, seed)]
                        .as_ref()
                        .map_err(|e| format!("base training (seed {seed}) failed: {e}"))?,
                ),
            };
            run_single(strategy, original, pool, hp, seed, pretrained)
                .map_err(|e| format!("training seed {seed}: {e}"))
        })
        .collect();
    let mut forecasts = Vec::with_capacity(per_seed.len());
    for result in per_seed {
        forecasts.push(result?);
    }
    median_ensemble(&forecasts).map_err(|e| e.to_string())
}

/// True when any value in any of the slices has magnitude below the
/// small-value threshold that switches the sMAPE variant.
fn any_small<'a>(values: impl IntoIterator<Item = &'a Vec<f64>>) -> bool {
    values
        .into_iter()
        .any(|v| v.iter().any(|x| x.abs() < SMALL_MAGNITUDE))
}

fn smape_metric_name(use_modified: bool) -> &'static str {
    if use_modified {
        "smape_modified"
    } else {
        "smape"
    }
}

/// Scores one forecast map against the held-out tails.
fn score_single(
    forecasts: &Forecasts,
    holdout: &BTreeMap<String, Vec<f64>>,
    train_ds: &Dataset,
    use_modified: bool,
    epsilon: f64,
) -> Result<BTreeMap<String, SeriesScore>> {
    let mut out = BTreeMap::new();
    for (id, actual) in holdout {
        let forecast = forecasts
            .get(id)
            .ok_or_else(|| Error::Validation(format!("no forecast for series {id:?}")))?;
        let history = &train_ds
            .get(id)
            .ok_or_else(|| Error::Validation(format!("no training series {id:?}")))?
            .values;
        let smape_value = if use_modified {
            smape_modified(forecast, actual, epsilon)?
        } else {
            smape(forecast, actual)?
        };
        let mase_value = mase(forecast, actual, history, train_ds.seasonality)?;
        out.insert(id.clone(), SeriesScore { smape: smape_value, mase: mase_value });
    }
    Ok(out)
}

/// Scores each generator seed's forecasts and averages the errors per series.
fn score_generator_average(
    gens: &[Forecasts],
    holdout: &BTreeMap<String, Vec<f64>>,
    train_ds: &Dataset,
    use_modified: bool,
    epsilon: f64,
) -> Result<BTreeMap<String, SeriesScore>> {
    let mut sums: BTreeMap<String, SeriesScore> = BTreeMap::new();
    for forecasts in gens {
        for (id, score) in score_single(forecasts, holdout, train_ds, use_modified, epsilon)? {
            let entry = sums.entry(id).or_insert(SeriesScore { smape: 0.0, mase: 0.0 });
            entry.smape += score.smape;
            entry.mase += score.mase;
        }
    }
    let n = gens.len() as f64;
    for score in sums.values_mut() {
        score.smape /= n;
        score.mase /= n;
    }
    Ok(sums)
}

// ---------------------------------------------------------------------------
// Report files
// ---------------------------------------------------------------------------

/// Writes `strategy,series_id,h,value` rows and returns how many were written.
fn write_forecasts_csv(path: &Path, entries: &[(String, &Forecasts)]) -> Result<usize> {
    let display = path.display().to_string();
    let fail = |e| crate::data::csv_error(&display, e);
    let mut writer = csv::Writer::from_path(path).map_err(fail)?;
    writer.write_record(["strategy", "series_id", "h", "value"]).map_err(fail)?;
    let mut rows = 0;
    for (strategy, forecasts) in entries {
        for (id, values) in forecasts.iter() {
            for (h, value) in values.iter().enumerate() {
                writer
                    .write_record([strategy.as_str(), id, &(h + 1).to_string(), &value.to_string()])
                    .map_err(fail)?;
                rows += 1;
            }
        }
    }
    writer.flush()?;
    Ok(rows)
}

/// Reads a forecast file back: strategy names in first-appearance order plus
/// per-strategy, per-series forecast vectors. Steps must arrive contiguously
/// as h = 1, 2, ... per (strategy, series) pair.
pub fn read_forecasts_csv(path: &Path) -> Result<(Vec<String>, BTreeMap<String, Forecasts>)> {
    let display = path.display().to_string();
    let mut reader = csv::Reader::from_path(path)
        .map_err(|e| Error::Config(format!("cannot read {display}: {e}")))?;
    let header = reader
        .headers()
        .map_err(|e| Error::Config(format!("cannot read {display}: {e}")))?
        .clone();
    let mut order = Vec::new();
    let mut by_strategy: BTreeMap<String, Forecasts> = BTreeMap::new();
    let mut raw = csv::StringRecord::new();
    #[derive(serde::Deserialize)]
    struct Row {
        strategy: String,
        series_id: String,
        h: usize,
        value: f64,
    }
    while reader
        .read_record(&mut raw)
        .map_err(|e| Error::Config(format!("cannot read {display}: {e}")))?
    {
        let line = raw.position().map(|p| p.line() as usize).unwrap_or(0);
        let parse = |msg: String| Error::Parse { path: display.clone(), line, msg };
        let row: Row = raw
            .deserialize(Some(&header))
            .map_err(|e| parse(e.to_string()))?;
        if !row.value.is_finite() {
            return Err(parse(format!("non-finite forecast value {}", row.value)));
        }
        if !by_strategy.contains_key(&row.strategy) {
            order.push(row.strategy.clone());
        }
        let series = by_strategy.entry(row.strategy).or_default();
        let values = series.entry(row.series_id.clone()).or_default();
        if row.h != values.len() + 1 {
            return Err(parse(format!(
                "series {:?} expects step {} next, got {}",
                row.series_id,
                values.len() + 1,
                row.h
            )));
        }
        values.push(row.value);
    }
    Ok((order, by_strategy))
}

/// Writes metrics.csv, ranks.csv, and stats.txt for the given strategies.
fn write_reports(
    out_dir: &Path,
    dataset_name: &str,
    metric: &str,
    order: &[String],
    scores: &BTreeMap<String, BTreeMap<String, SeriesScore>>,
) -> Result<()> {
    let matrices = if order.is_empty() {
        None
    } else {
        let series: Vec<&String> = scores[&order[0]].keys().collect();
        let mut smape_matrix = ErrorMatrix::new(order.to_vec())?;
        let mut mase_matrix = ErrorMatrix::new(order.to_vec())?;
        for id in &series {
            let mut smape_row = Vec::with_capacity(order.len());
            let mut mase_row = Vec::with_capacity(order.len());
            for name in order {
                let score = scores[name].get(*id).ok_or_else(|| {
                    Error::Validation(format!("strategy {name:?} lacks series {id:?}"))
                })?;
                smape_row.push(score.smape);
                mase_row.push(score.mase);
            }
            smape_matrix.push_row((*id).clone(), smape_row)?;
            mase_matrix.push_row((*id).clone(), mase_row)?;
        }
        Some((smape_matrix, mase_matrix))
    };

    // metrics.csv: two rows (sMAPE variant, MASE) per strategy.
    let metrics_path = out_dir.join("metrics.csv");
    let display = metrics_path.display().to_string();
    let fail = |e| crate::data::csv_error(&display, e);
    let mut writer = csv::Writer::from_path(&metrics_path).map_err(fail)?;
    writer.write_record(["dataset", "method", "metric", "mean", "median"]).map_err(fail)?;
    if let Some((smape_matrix, mase_matrix)) = &matrices {
        for (a, b) in aggregate(smape_matrix)?.iter().zip(aggregate(mase_matrix)?) {
            for (name, agg) in [(metric, a), ("mase", &b)] {
                writer
                    .write_record([
                        dataset_name,
                        &agg.method,
                        name,
                        &format!("{:.6}", agg.mean),
                        &format!("{:.6}", agg.median),
                    ])
                    .map_err(fail)?;
            }
        }
    }
    writer.flush()?;

    // ranks.csv: average rank per strategy under both metrics.
    let mut ranks = String::from("method,rank_smape,rank_mase\n");
    if let Some((smape_matrix, mase_matrix)) = &matrices {
        if smape_matrix.n_methods() >= 2 {
            for (s, m) in average_ranks(smape_matrix)?.iter().zip(average_ranks(mase_matrix)?) {
                let _ = writeln!(ranks, "{},{:.6},{:.6}", s.0, s.1, m.1);
            }
        }
    }
    fs::write(out_dir.join("ranks.csv"), ranks)?;

    // stats.txt: rank test and adjusted pairwise comparisons per metric.
    let mut stats = String::new();
    match &matrices {
        Some((smape_matrix, mase_matrix))
            if smape_matrix.n_methods() >= 2 && smape_matrix.n_rows() >= 2 =>
        {
            stats.push_str(&stat_section(metric, &stat_report(smape_matrix)?));
            stats.push('\n');
            stats.push_str(&stat_section("mase", &stat_report(mase_matrix)?));
        }
        _ => {
            stats.push_str(
                "rank statistics need at least two strategies and two series\n",
            );
        }
    }
    fs::write(out_dir.join("stats.txt"), stats)?;
    Ok(())
}

/// One stats.txt section: test outcome, control, and the adjusted pairwise
/// p-values with a separator at the significance level.
fn stat_section(metric: &str, report: &crate::eval::StatReport) -> String {
    let control_rank = report
        .average_ranks
        .iter()
        .find(|(name, _)| *name == report.control)
        .map(|(_, rank)| *rank)
        .unwrap_or(f64::NAN);
    let mut s = String::new();
    let _ = writeln!(s, "== {metric} ==");
    let _ = writeln!(s, "friedman statistic: {:.6}", report.friedman_statistic);
    let _ = writeln!(s, "friedman p-value:   {:.4e}", report.friedman_p);
    let _ = writeln!(s, "control: {} (average rank {:.6})", report.control, control_rank);
    let _ = writeln!(s);
    let _ = writeln!(s, "{:<28} {:>12}", "method", "adjusted p");
    let mut rows: Vec<(&String, f64)> =
        report.adjusted_p.iter().map(|(k, v)| (k, *v)).collect();
    rows.sort_by(|a, b| a.1.partial_cmp(&b.1).expect("p-values are finite").then(a.0.cmp(b.0)));
    let mut separated = false;
    for (name, p) in rows {
        if !separated && p > ALPHA {
            let _ = writeln!(s, "{} alpha = {ALPHA}", "-".repeat(28));
            separated = true;
        }
        let _ = writeln!(s, "{name:<28} {p:>12.4e}");
    }
    if !separated {
        let _ = writeln!(s, "{} alpha = {ALPHA}", "-".repeat(28));
    }
    s
}

/// Provenance record: version, config hash, resolved settings. No timestamps,
/// so reruns are byte-identical.
fn write_manifest(
    path: &Path,
    cfg: &ExperimentConfig,
    train_ds: &Dataset,
    hp: &Hyperparameters,
    metric: &str,
) -> Result<()> {
    let strategies: Vec<String> = cfg.strategies.iter().map(|s| s.to_string()).collect();
    let hp_json = serde_json::to_string(hp)
        .map_err(|e| Error::Numeric(format!("cannot serialize settings: {e}")))?;
    let hp_source = match &cfg.hp_source {
        HpSource::Fixed(_) => "fixed".to_string(),
        HpSource::Search { budget, seed } => format!("search(budget={budget}, seed={seed})"),
    };
    let mut s = String::new();
    let _ = writeln!(s, "version: {}", env!("CARGO_PKG_VERSION"));
    let _ = writeln!(s, "config_sha256: {}", cfg.config_hash());
    let _ = writeln!(s, "dataset: {}", train_ds.name);
    let _ = writeln!(s, "series: {}", train_ds.series.len());
    let _ = writeln!(s, "seasonality: {}", train_ds.seasonality);
    let _ = writeln!(s, "horizon: {}", train_ds.horizon);
    let _ = writeln!(s, "input_window: {}", train_ds.input_window);
    let _ = writeln!(s, "paradigm: {}", train_ds.paradigm);
    let _ = writeln!(s, "strategies: {}", strategies.join(", "));
    let _ = writeln!(s, "training_seeds: {}", cfg.training_seeds);
    let _ = writeln!(s, "generator_seeds: {}", cfg.generator_seeds);
    let _ = writeln!(s, "hp_source: {hp_source}");
    let _ = writeln!(s, "hyperparameters: {hp_json}");
    let _ = writeln!(
        s,
        "augmentation: per_series={}, total={:?}, block_length={:?}, dba_iterations={}, mar_components={}",
        cfg.per_series, cfg.total, cfg.block_length, cfg.dba_iterations, cfg.mar_components
    );
    let _ = writeln!(s, "smape_metric: {metric}");
    let _ = writeln!(s, "epsilon_smape: {}", cfg.epsilon_smape);
    fs::write(path, s)?;
    Ok(())
}

fn load_hyperparameters(path: &Path) -> Result<Hyperparameters> {
    let raw = fs::read_to_string(path)?;
    let hp: Hyperparameters = serde_json::from_str(&raw).map_err(|e| Error::Parse {
        path: path.display().to_string(),
        line: e.line(),
        msg: e.to_string(),
    })?;
    Ok(hp)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Paradigm;

    fn toy_series(count: usize, len: usize) -> Vec<TimeSeries> {
        (0..count)
            .map(|k| {
                let values = (0..len)
                    .map(|t| {
                        10.0 + k as f64
                            + 3.0 * ((t % 4) as f64)
                            + 0.1 * t as f64
                    })
                    .collect();
                TimeSeries::new(format!("s{k}"), values).unwrap()
            })
            .collect()
    }

    fn toy_meta() -> DatasetMeta {
        DatasetMeta {
            name: "toy".into(),
            seasonality: 4,
            horizon: 4,
            paradigm: Paradigm::Ds,
            input_window: Some(5),
        }
    }

    fn toy_dataset() -> Dataset {
        Dataset::new(&toy_meta(), toy_series(5, 16)).unwrap()
    }

    /// Writes the toy dataset to disk and returns (data path, meta path).
    fn toy_files(dir: &Path) -> (PathBuf, PathBuf) {
        let data = dir.join("toy.csv");
        let meta = dir.join("toy.toml");
        write_series_csv(&data, &toy_series(5, 16)).unwrap();
        toy_meta().save(&meta).unwrap();
        (data, meta)
    }

    fn fast_hp() -> Hyperparameters {
        Hyperparameters { max_epochs: 2, layers: 1, ..Hyperparameters::default() }
    }

    fn write_hp(dir: &Path, hp: &Hyperparameters) -> PathBuf {
        let path = dir.join("hp.json");
        fs::write(&path, serde_json::to_string(hp).unwrap()).unwrap();
        path
    }

    fn base_config(dir: &Path, strategies: Vec<Strategy>, out: &str) -> ExperimentConfig {
        let (data, meta) = toy_files(dir);
        ExperimentConfig {
            dataset_path: data,
            meta_path: meta,
            strategies,
            training_seeds: 2,
            generator_seeds: 1,
            hp_source: HpSource::Fixed(fast_hp()),
            per_series: 2,
            total: None,
            block_length: None,
            dba_iterations: 3,
            mar_components: 4,
            epsilon_smape: DEFAULT_SMAPE_EPSILON,
            smape: SmapeVariant::Auto,
            out_dir: dir.join(out),
        }
    }

    #[test]
    fn sampled_candidates_stay_inside_the_search_ranges() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..1000 {
            let hp = sample_hyperparameters(&mut rng);
            hp.validate().unwrap();
        }
    }

    #[test]
    fn tune_with_budget_one_returns_the_first_candidate() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let expected = sample_hyperparameters(&mut rng);
        let (hp, _) = tune(&toy_dataset(), 1, 11).unwrap();
        assert_eq!(hp, expected);
    }

    #[test]
    fn tune_is_deterministic_per_seed() {
        let d = toy_dataset();
        let (a, score_a) = tune(&d, 3, 5).unwrap();
        let (b, score_b) = tune(&d, 3, 5).unwrap();
        assert_eq!(a, b);
        assert_eq!(score_a.to_bits(), score_b.to_bits());
    }

    #[test]
    fn tune_rejects_zero_budget() {
        assert!(tune(&toy_dataset(), 0, 1).is_err());
    }

    #[test]
    fn baseline_only_experiment_writes_one_metrics_row_per_metric() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = base_config(dir.path(), vec![Strategy::Baseline], "out");
        let outcome = run_experiment(&cfg).unwrap();
        assert!(outcome.failures.is_empty());
        assert_eq!(outcome.strategy_order, vec!["LSTM.Baseline".to_string()]);

        let metrics = fs::read_to_string(cfg.out_dir.join("metrics.csv")).unwrap();
        let rows: Vec<&str> = metrics.lines().collect();
        assert_eq!(rows[0], "dataset,method,metric,mean,median");
        assert_eq!(rows.len(), 3); // header + one row per metric
        assert!(rows[1].starts_with("toy,LSTM.Baseline,smape,"));
        assert!(rows[2].starts_with("toy,LSTM.Baseline,mase,"));

        // A single strategy cannot be ranked against anything.
        let ranks = fs::read_to_string(cfg.out_dir.join("ranks.csv")).unwrap();
        assert_eq!(ranks, "method,rank_smape,rank_mase\n");
        let forecasts = fs::read_to_string(cfg.out_dir.join("forecasts.csv")).unwrap();
        assert_eq!(forecasts.lines().count(), 1 + 5 * 4);
        let manifest = fs::read_to_string(cfg.out_dir.join("manifest.txt")).unwrap();
        assert!(manifest.contains("config_sha256: "));
        assert!(manifest.contains("training_seeds: 2"));
        assert_eq!(fs::read_to_string(cfg.out_dir.join("errors.log")).unwrap(), "");
    }

    #[test]
    fn experiment_reruns_are_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let strategies = vec![
            Strategy::Baseline,
            Strategy::pooled(Method::Mbb).unwrap(),
            Strategy::transfer(Method::Mbb, Scheme::Dense, crate::transfer::Mode::Freeze, 1)
                .unwrap(),
        ];
        let mut first = base_config(dir.path(), strategies, "a");
        first.generator_seeds = 2;
        let mut second = first.clone();
        second.out_dir = dir.path().join("b");
        run_experiment(&first).unwrap();
        run_experiment(&second).unwrap();
        for file in ["metrics.csv", "ranks.csv", "forecasts.csv", "stats.txt"] {
            let a = fs::read(first.out_dir.join(file)).unwrap();
            let b = fs::read(second.out_dir.join(file)).unwrap();
            assert_eq!(a, b, "{file} differs between reruns");
        }
    }

    #[test]
    fn a_failing_strategy_is_isolated_and_logged() {
        let dir = tempfile::tempdir().unwrap();
        // q = 0 slips past construction only when the enum is built directly;
        // the network builder rejects it at runtime, isolating the failure.
        let bad = Strategy::Transfer {
            method: Method::Mbb,
            scheme: Scheme::AddDense,
            mode: crate::transfer::Mode::Freeze,
            q: 0,
        };
        let cfg = base_config(dir.path(), vec![Strategy::Baseline, bad], "out");
        let outcome = run_experiment(&cfg).unwrap();
        assert!(outcome.errors.contains_key("LSTM.Baseline"));
        assert_eq!(outcome.failures.len(), 1);
        assert!(outcome.failures.contains_key("MBB.TL.AddDense.Freeze"));

        let log = fs::read_to_string(cfg.out_dir.join("errors.log")).unwrap();
        assert!(log.starts_with("MBB.TL.AddDense.Freeze: "));
        let metrics = fs::read_to_string(cfg.out_dir.join("metrics.csv")).unwrap();
        assert!(metrics.contains("LSTM.Baseline"));
        assert!(!metrics.contains("AddDense"));
    }

    #[test]
    fn duplicate_strategy_names_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = base_config(
            dir.path(),
            vec![Strategy::Baseline, Strategy::Baseline],
            "out",
        );
        let err = cfg.validate().unwrap_err().to_string();
        assert!(err.contains("twice"), "unexpected message: {err}");
    }

    #[test]
    fn cli_reports_config_errors_with_exit_code_one() {
        let code = run_with([
            "augcast",
            "experiment",
            "--dataset",
            "/nonexistent/data.csv",
            "--meta",
            "/nonexistent/meta.toml",
            "--out",
            "/tmp/unused",
        ]);
        assert_eq!(code, 1);
        // Unknown flags are configuration errors as well.
        assert_eq!(run_with(["augcast", "--bogus"]), 1);
    }

    #[test]
    fn scoring_failures_exit_with_code_two() {
        // Constant series have no seasonal variation, so the scaled error's
        // denominator degenerates and scoring fails at runtime.
        let dir = tempfile::tempdir().unwrap();
        let data = dir.path().join("flat.csv");
        let meta = dir.path().join("flat.toml");
        let series: Vec<TimeSeries> = (0..3)
            .map(|k| TimeSeries::new(format!("s{k}"), vec![5.0 + k as f64; 16]).unwrap())
            .collect();
        write_series_csv(&data, &series).unwrap();
        toy_meta().save(&meta).unwrap();
        let hp_path = write_hp(dir.path(), &fast_hp());
        let code = run_with([
            "augcast".as_ref(),
            "experiment".as_ref(),
            "--dataset".as_ref(),
            data.as_os_str(),
            "--meta".as_ref(),
            meta.as_os_str(),
            "--strategy".as_ref(),
            "LSTM.Baseline".as_ref(),
            "--seeds".as_ref(),
            "1".as_ref(),
            "--hp".as_ref(),
            hp_path.as_os_str(),
            "--out".as_ref(),
            dir.path().join("out").as_os_str(),
        ]);
        assert_eq!(code, 2);
        let log = fs::read_to_string(dir.path().join("out/errors.log")).unwrap();
        assert!(log.contains("LSTM.Baseline: scoring failed"), "log: {log}");
    }

    #[test]
    fn augment_subcommand_writes_suffixed_series() {
        let dir = tempfile::tempdir().unwrap();
        let (data, meta) = toy_files(dir.path());
        let out = dir.path().join("aug.csv");
        let code = run_with([
            "augcast".as_ref(),
            "augment".as_ref(),
            "--dataset".as_ref(),
            data.as_os_str(),
            "--meta".as_ref(),
            meta.as_os_str(),
            "--method".as_ref(),
            "MBB".as_ref(),
            "--per-series".as_ref(),
            "2".as_ref(),
            "--out".as_ref(),
            out.as_os_str(),
        ]);
        assert_eq!(code, 0);
        let series = crate::data::read_series_csv(&out).unwrap();
        assert_eq!(series.len(), 10);
        assert!(series.iter().all(|s| s.id.contains("__aug")));
    }

    #[test]
    fn train_forecast_evaluate_compose_on_files() {
        let dir = tempfile::tempdir().unwrap();
        let (data, meta) = toy_files(dir.path());
        let hp_path = write_hp(dir.path(), &fast_hp());
        let checkpoint = dir.path().join("model.json");
        let forecasts = dir.path().join("forecasts.csv");
        let reports = dir.path().join("reports");

        let code = run_with([
            "augcast".as_ref(),
            "train".as_ref(),
            "--dataset".as_ref(),
            data.as_os_str(),
            "--meta".as_ref(),
            meta.as_os_str(),
            "--hp".as_ref(),
            hp_path.as_os_str(),
            "--seed".as_ref(),
            "3".as_ref(),
            "--out".as_ref(),
            checkpoint.as_os_str(),
        ]);
        assert_eq!(code, 0);
        assert!(checkpoint.exists());

        let code = run_with([
            "augcast".as_ref(),
            "forecast".as_ref(),
            "--dataset".as_ref(),
            data.as_os_str(),
            "--meta".as_ref(),
            meta.as_os_str(),
            "--checkpoint".as_ref(),
            checkpoint.as_os_str(),
            "--strategy".as_ref(),
            "LSTM.Baseline".as_ref(),
            "--out".as_ref(),
            forecasts.as_os_str(),
        ]);
        assert_eq!(code, 0);

        let code = run_with([
            "augcast".as_ref(),
            "evaluate".as_ref(),
            "--dataset".as_ref(),
            data.as_os_str(),
            "--meta".as_ref(),
            meta.as_os_str(),
            "--forecasts".as_ref(),
            forecasts.as_os_str(),
            "--out".as_ref(),
            reports.as_os_str(),
        ]);
        assert_eq!(code, 0);
        let metrics = fs::read_to_string(reports.join("metrics.csv")).unwrap();
        assert_eq!(metrics.lines().count(), 3);
        assert!(metrics.contains("toy,LSTM.Baseline,"));
    }

    #[test]
    fn forecast_files_roundtrip_through_read_and_write() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.csv");
        let mut forecasts: Forecasts = BTreeMap::new();
        forecasts.insert("plain".into(), vec![1.25, 2.5]);
        forecasts.insert("quoted, id".into(), vec![0.1, 0.2]);
        write_forecasts_csv(&path, &[("m".into(), &forecasts)]).unwrap();
        let (order, read) = read_forecasts_csv(&path).unwrap();
        assert_eq!(order, vec!["m".to_string()]);
        assert_eq!(read["m"], forecasts);
    }

    #[test]
    fn forecast_files_with_step_gaps_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        fs::write(&path, "strategy,series_id,h,value\nm,s0,1,1.0\nm,s0,3,2.0\n").unwrap();
        let err = read_forecasts_csv(&path).unwrap_err().to_string();
        assert!(err.contains("expects step 2"), "unexpected message: {err}");
    }
}
