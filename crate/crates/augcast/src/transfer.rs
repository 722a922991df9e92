//! Knowledge-transfer strategies. A forecast run either trains on the
//! original series alone, pools them with synthetic series, or pre-trains a
//! base model on synthetic series and fine-tunes it on the originals after
//! appending fresh layers — with the pre-trained blocks optionally frozen.
//! Every strategy trains once per seed and returns the elementwise median
//! of the per-seed forecasts.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::augment::Method;
use crate::data::{Dataset, TimeSeries};
use crate::error::{Error, Result};
use crate::net::{train, DenseLayer, Hyperparameters, Layer, LstmLayer, Network};
use crate::pipeline::{postprocess, preprocess, PreprocessState, Window, WindowSet};

/// Architecture appended to a pre-trained base model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Scheme {
    /// One projection mapping the base output to the target horizon.
    Dense,
    /// `q` projections: `q - 1` hidden ones at the base output width, then
    /// one onto the target horizon.
    AddDense,
    /// `q` residual recurrent layers at the cell width in place of the base
    /// projection, then a fresh projection onto the target horizon.
    Lstm,
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scheme::Dense => "Dense",
            Scheme::AddDense => "AddDense",
            Scheme::Lstm => "LSTM",
        })
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "Dense" => Ok(Scheme::Dense),
            "AddDense" => Ok(Scheme::AddDense),
            "LSTM" | "Lstm" => Ok(Scheme::Lstm),
            other => Err(Error::Config(format!(
                "unknown scheme {other:?}; expected Dense, AddDense, or LSTM"
            ))),
        }
    }
}

/// Whether pre-trained blocks keep learning during fine-tuning.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Mode {
    Freeze,
    Retrain,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Freeze => "Freeze",
            Mode::Retrain => "Retrain",
        })
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "Freeze" => Ok(Mode::Freeze),
            "Retrain" => Ok(Mode::Retrain),
            other => Err(Error::Config(format!(
                "unknown mode {other:?}; expected Freeze or Retrain"
            ))),
        }
    }
}

/// One of the 21 forecasting variants.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Strategy {
    /// Train on the original series only.
    Baseline,
    /// Train one model on originals plus synthetic series.
    Pooled { method: Method },
    /// Pre-train on synthetic series, append layers, fine-tune on originals.
    Transfer { method: Method, scheme: Scheme, mode: Mode, q: usize },
}

impl Strategy {
    /// Added-layer count used when none is given on the command line.
    pub fn default_q(scheme: Scheme) -> usize {
        match scheme {
            Scheme::Dense => 1,
            Scheme::AddDense => 2,
            Scheme::Lstm => 1,
        }
    }

    pub fn pooled(method: Method) -> Result<Strategy> {
        if method == Method::Gratis {
            return Err(Error::Config(
                "GRATIS series share no scale with the originals, so pooling them \
                 with the original series is not supported; use a transfer scheme"
                    .into(),
            ));
        }
        Ok(Strategy::Pooled { method })
    }

    pub fn transfer(method: Method, scheme: Scheme, mode: Mode, q: usize) -> Result<Strategy> {
        let q = if scheme == Scheme::Dense { 1 } else { q };
        if q < 1 {
            return Err(Error::Config(format!(
                "{scheme} transfer needs at least one added layer, got q = {q}"
            )));
        }
        Ok(Strategy::Transfer { method, scheme, mode, q })
    }

    /// The full variant set: the baseline, both pooled methods, and every
    /// method x scheme x mode combination — 21 strategies.
    pub fn all(q_add_dense: usize, q_lstm: usize) -> Vec<Strategy> {
        let mut out = vec![Strategy::Baseline];
        for method in [Method::Mbb, Method::Dba] {
            out.push(Strategy::Pooled { method });
        }
        for method in Method::ALL {
            for scheme in [Scheme::Dense, Scheme::AddDense, Scheme::Lstm] {
                let q = match scheme {
                    Scheme::Dense => 1,
                    Scheme::AddDense => q_add_dense,
                    Scheme::Lstm => q_lstm,
                };
                for mode in [Mode::Freeze, Mode::Retrain] {
                    out.push(Strategy::Transfer { method, scheme, mode, q });
                }
            }
        }
        out
    }

    pub fn method(&self) -> Option<Method> {
        match self {
            Strategy::Baseline => None,
            Strategy::Pooled { method } | Strategy::Transfer { method, .. } => Some(*method),
        }
    }

    pub fn needs_augmentation(&self) -> bool {
        !matches!(self, Strategy::Baseline)
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Strategy::Baseline => f.write_str("LSTM.Baseline"),
            Strategy::Pooled { method } => write!(f, "{method}.Pooled"),
            Strategy::Transfer { method, scheme, mode, .. } => {
                write!(f, "{method}.TL.{scheme}.{mode}")
            }
        }
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split('.').collect();
        match parts.as_slice() {
            ["LSTM", "Baseline"] => Ok(Strategy::Baseline),
            [method, "Pooled"] => Strategy::pooled(method.parse()?),
            [method, "TL", scheme, mode] => {
                let scheme: Scheme = scheme.parse()?;
                Strategy::transfer(method.parse()?, scheme, mode.parse()?, Strategy::default_q(scheme))
            }
            _ => Err(Error::Config(format!(
                "unknown strategy {s:?}; expected LSTM.Baseline, <METHOD>.Pooled, \
                 or <METHOD>.TL.<SCHEME>.<MODE>"
            ))),
        }
    }
}

/// Extends a pre-trained model for fine-tuning: appends the scheme's layers
/// (freshly initialized) and, in Freeze mode, pins every pre-existing block.
pub fn build_target(
    base: &Network,
    scheme: Scheme,
    mode: Mode,
    q: usize,
    target_m: usize,
    init_std: f64,
    rng: &mut impl rand::Rng,
) -> Result<Network> {
    if scheme != Scheme::Dense && q < 1 {
        return Err(Error::Config(format!(
            "{scheme} transfer needs at least one added layer, got q = {q}"
        )));
    }
    if target_m < 1 {
        return Err(Error::Config("target horizon must be positive".into()));
    }
    let mut net = base.clone();
    match scheme {
        Scheme::Dense => {
            let width = net.output_dim();
            let pre = net.layers.len();
            net.layers.push(Layer::Dense(DenseLayer::init(width, target_m, init_std, rng)));
            apply_mode(&mut net, mode, pre);
        }
        Scheme::AddDense => {
            let width = net.output_dim();
            let pre = net.layers.len();
            for _ in 1..q {
                net.layers.push(Layer::Dense(DenseLayer::init(width, width, init_std, rng)));
            }
            net.layers.push(Layer::Dense(DenseLayer::init(width, target_m, init_std, rng)));
            apply_mode(&mut net, mode, pre);
        }
        Scheme::Lstm => {
            // Recurrent additions must match the cell width so the identity
            // skip connection lines up; the base projection is replaced by a
            // fresh one after the new recurrent layers.
            if !matches!(net.layers.last(), Some(Layer::Dense(_))) {
                return Err(Error::Validation(
                    "base model must end in a projection layer".into(),
                ));
            }
            net.layers.pop();
            let cell = net
                .layers
                .last()
                .map(Layer::output_dim)
                .ok_or_else(|| Error::Validation("base model has no recurrent stack".into()))?;
            let pre = net.layers.len();
            for _ in 0..q {
                net.layers.push(Layer::Lstm(LstmLayer::init(cell, cell, true, init_std, rng)));
            }
            net.layers.push(Layer::Dense(DenseLayer::init(cell, target_m, init_std, rng)));
            apply_mode(&mut net, mode, pre);
        }
    }
    Ok(net)
}

fn apply_mode(net: &mut Network, mode: Mode, pre_existing: usize) {
    for layer in &mut net.layers[..pre_existing] {
        layer.set_frozen(mode == Mode::Freeze);
    }
    for layer in &mut net.layers[pre_existing..] {
        layer.set_frozen(false);
    }
}

/// Initializes a fresh network for one training seed.
/// Builds a freshly initialized network whose parameters depend only on the
/// seed and the requested shape.
pub fn seeded_network(
    input_width: usize,
    output_width: usize,
    hp: &Hyperparameters,
    seed: u64,
) -> Result<Network> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Network::new(input_width, output_width, hp.cell_dim, hp.layers, hp.init_std, &mut rng)
}

/// Width of the flattened network input implied by a window set.
pub fn network_input_width(windows: &BTreeMap<String, WindowSet>) -> Result<usize> {
    windows
        .values()
        .next()
        .and_then(|ws| ws.windows.first())
        .map(|w| w.network_input().len())
        .ok_or_else(|| Error::Domain("no windows to size the network from".into()))
}

/// Runs every series through the network in window order and maps the
/// forecast-window prediction back to the original scale.
pub fn forecast_all(
    net: &Network,
    states: &BTreeMap<String, PreprocessState>,
    windows: &BTreeMap<String, WindowSet>,
) -> Result<BTreeMap<String, Vec<f64>>> {
    let mut out = BTreeMap::new();
    for (id, ws) in windows {
        let mut chain: Vec<Window> = ws.windows.clone();
        chain.push(ws.forecast.clone());
        let predictions = net.forward(&chain);
        let last = predictions.last().expect("chain is never empty");
        let state = states
            .get(id)
            .ok_or_else(|| Error::Validation(format!("no preprocessing state for series {id:?}")))?;
        let forecast =
            postprocess(last.as_slice().expect("standard layout"), &ws.forecast, state)?;
        out.insert(id.clone(), forecast);
    }
    Ok(out)
}

/// Elementwise median across per-seed forecast maps.
pub fn median_ensemble(
    runs: &[BTreeMap<String, Vec<f64>>],
) -> Result<BTreeMap<String, Vec<f64>>> {
    let first = runs
        .first()
        .ok_or_else(|| Error::Domain("no forecast runs to ensemble".into()))?;
    let mut out = BTreeMap::new();
    for (id, forecast) in first {
        let mut combined = Vec::with_capacity(forecast.len());
        for h in 0..forecast.len() {
            let mut values = Vec::with_capacity(runs.len());
            for run in runs {
                let f = run.get(id).ok_or_else(|| {
                    Error::Validation(format!("forecast runs disagree on series {id:?}"))
                })?;
                values.push(f[h]);
            }
            combined.push(median(&mut values));
        }
        out.insert(id.clone(), combined);
    }
    Ok(out)
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_unstable_by(|a, b| a.partial_cmp(b).expect("forecasts are comparable"));
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    }
}

/// Bundles the synthetic series into a standalone dataset carrying the
/// original's metadata, for pre-training.
pub fn augmented_dataset(original: &Dataset, augmented: &[TimeSeries]) -> Result<Dataset> {
    Dataset::derived(
        format!("{}-augmented", original.name),
        &original.meta(),
        augmented.to_vec(),
    )
}

fn pooled_dataset(original: &Dataset, augmented: &[TimeSeries]) -> Result<Dataset> {
    let mut series = original.series.clone();
    series.extend_from_slice(augmented);
    Dataset::derived(format!("{}-pooled", original.name), &original.meta(), series)
}

/// Trains a base model on the synthetic series alone; the best validation
/// epoch wins, exactly as in target training.
pub fn pretrain_base(
    original: &Dataset,
    augmented: &[TimeSeries],
    hp: &Hyperparameters,
    seed: u64,
) -> Result<Network> {
    let base_data = augmented_dataset(original, augmented)?;
    let (_, windows) = preprocess(&base_data)?;
    let net = seeded_network(network_input_width(&windows)?, base_data.horizon, hp, seed)?;
    Ok(train(&net, &windows, hp, seed)?.network)
}

/// One training seed of one strategy: returns per-series forecasts on the
/// original scale. For transfer strategies a pre-trained base may be passed
/// in (it must stem from the same synthetic series, settings, and seed);
/// otherwise one is trained here.
pub fn run_single(
    strategy: &Strategy,
    original: &Dataset,
    augmented: &[TimeSeries],
    hp: &Hyperparameters,
    seed: u64,
    pretrained: Option<&Network>,
) -> Result<BTreeMap<String, Vec<f64>>> {
    match strategy {
        Strategy::Baseline => {
            let (states, windows) = preprocess(original)?;
            let net = seeded_network(network_input_width(&windows)?, original.horizon, hp, seed)?;
            let outcome = train(&net, &windows, hp, seed)?;
            forecast_all(&outcome.network, &states, &windows)
        }
        Strategy::Pooled { .. } => {
            let pooled = pooled_dataset(original, augmented)?;
            let (states, windows) = preprocess(&pooled)?;
            let net = seeded_network(network_input_width(&windows)?, pooled.horizon, hp, seed)?;
            let outcome = train(&net, &windows, hp, seed)?;
            let originals: BTreeMap<String, WindowSet> = windows
                .into_iter()
                .filter(|(id, _)| original.get(id).is_some())
                .collect();
            forecast_all(&outcome.network, &states, &originals)
        }
        Strategy::Transfer { scheme, mode, q, .. } => {
            let owned;
            let base = match pretrained {
                Some(b) => b,
                None => {
                    owned = pretrain_base(original, augmented, hp, seed)?;
                    &owned
                }
            };
            let (states, windows) = preprocess(original)?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let target =
                build_target(base, *scheme, *mode, *q, original.horizon, hp.init_std, &mut rng)?;
            let outcome = train(&target, &windows, hp, seed)?;
            forecast_all(&outcome.network, &states, &windows)
        }
    }
}

/// Full strategy run: one training per seed (in parallel), then the
/// elementwise median forecast per series.
pub fn run_strategy(
    strategy: &Strategy,
    original: &Dataset,
    augmented: &[TimeSeries],
    hp: &Hyperparameters,
    seeds: &[u64],
) -> Result<BTreeMap<String, Vec<f64>>> {
    if seeds.is_empty() {
        return Err(Error::Config("at least one training seed is required".into()));
    }
    if strategy.needs_augmentation() && augmented.is_empty() {
        return Err(Error::Domain(format!(
            "strategy {strategy} needs synthetic series, but none were provided"
        )));
    }
    let runs: Vec<BTreeMap<String, Vec<f64>>> = seeds
        .par_iter()
        .map(|&seed| run_single(strategy, original, augmented, hp, seed, None))
        .collect::<Result<_>>()?;
    median_ensemble(&runs)
}
