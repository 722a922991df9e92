//! Residual stacked LSTM with a linear projection head.
//!
//! One network is trained across all series of a dataset. The windows of a
//! series form its time axis: recurrent state is carried from window to
//! window within a series and reset between series. Every recurrent layer
//! except the first is wrapped in an identity skip connection, so layers can
//! fall back to passing their input through.

mod checkpoint;
mod cocob;
mod grad;
mod train;

pub use checkpoint::Checkpoint;
pub use cocob::{cocob_step, OptimizerState};
pub use grad::{finite_difference_check, gradients, Gradients, LayerGrad};
pub use train::{train, validation_error, TrainOutcome};

use ndarray::{Array1, Array2, Axis};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pipeline::Window;

/// Training settings; all fields are restricted to closed ranges.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperparameters {
    pub cell_dim: usize,
    /// Series per gradient step.
    pub minibatch: usize,
    /// Full passes over the data per epoch.
    pub epoch_size: usize,
    pub max_epochs: usize,
    pub layers: usize,
    /// Standard deviation of Gaussian noise added to inputs while training.
    pub noise_std: f64,
    /// Standard deviation of the Gaussian weight initializer.
    pub init_std: f64,
    pub l2_weight: f64,
}

impl Hyperparameters {
    pub const CELL_DIM: (usize, usize) = (20, 50);
    pub const MINIBATCH: (usize, usize) = (1, 100);
    pub const EPOCH_SIZE: (usize, usize) = (2, 5);
    pub const MAX_EPOCHS: (usize, usize) = (2, 50);
    pub const LAYERS: (usize, usize) = (1, 5);
    /// Shared range of `noise_std`, `init_std`, and `l2_weight`.
    pub const REAL_PARAMS: (f64, f64) = (1e-4, 8e-4);

    pub fn validate(&self) -> Result<()> {
        fn check_int(name: &str, value: usize, range: (usize, usize)) -> Result<()> {
            if value < range.0 || value > range.1 {
                return Err(Error::Config(format!(
                    "{name} = {value} outside [{}, {}]",
                    range.0, range.1
                )));
            }
            Ok(())
        }
        fn check_real(name: &str, value: f64, range: (f64, f64)) -> Result<()> {
            if !(value >= range.0 && value <= range.1) {
                return Err(Error::Config(format!(
                    "{name} = {value} outside [{}, {}]",
                    range.0, range.1
                )));
            }
            Ok(())
        }
        check_int("cell_dim", self.cell_dim, Self::CELL_DIM)?;
        check_int("minibatch", self.minibatch, Self::MINIBATCH)?;
        check_int("epoch_size", self.epoch_size, Self::EPOCH_SIZE)?;
        check_int("max_epochs", self.max_epochs, Self::MAX_EPOCHS)?;
        check_int("layers", self.layers, Self::LAYERS)?;
        check_real("noise_std", self.noise_std, Self::REAL_PARAMS)?;
        check_real("init_std", self.init_std, Self::REAL_PARAMS)?;
        check_real("l2_weight", self.l2_weight, Self::REAL_PARAMS)?;
        Ok(())
    }
}

impl Default for Hyperparameters {
    /// Mid-range settings used when nothing tuned is supplied; every field
    /// passes [`Hyperparameters::validate`].
    fn default() -> Self {
        Hyperparameters {
            cell_dim: 20,
            minibatch: 10,
            epoch_size: 2,
            max_epochs: 20,
            layers: 2,
            noise_std: 4e-4,
            init_std: 4e-4,
            l2_weight: 4e-4,
        }
    }
}

/// Gate block order within stacked LSTM parameters.
pub(crate) const GATES: usize = 4; // input, forget, cell candidate, output

/// Recurrent layer. Gate weights are stacked row-wise in the order input,
/// forget, cell candidate, output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmLayer {
    pub w_input: Array2<f64>,
    pub w_recurrent: Array2<f64>,
    pub bias: Array1<f64>,
    /// Adds the layer input to its output (identity skip connection).
    pub residual: bool,
    pub frozen: bool,
}

impl LstmLayer {
    pub fn cell_dim(&self) -> usize {
        self.w_recurrent.ncols()
    }

    pub fn input_dim(&self) -> usize {
        self.w_input.ncols()
    }

    pub(crate) fn init(
        input_dim: usize,
        cell_dim: usize,
        residual: bool,
        init_std: f64,
        rng: &mut impl Rng,
    ) -> Self {
        let normal = Normal::new(0.0, init_std).expect("valid sigma");
        let mut bias = Array1::zeros(GATES * cell_dim);
        // Forget gate bias starts at 1 so early training retains state.
        bias.slice_mut(ndarray::s![cell_dim..2 * cell_dim]).fill(1.0);
        LstmLayer {
            w_input: Array2::from_shape_fn((GATES * cell_dim, input_dim), |_| normal.sample(rng)),
            w_recurrent: Array2::from_shape_fn((GATES * cell_dim, cell_dim), |_| normal.sample(rng)),
            bias,
            residual,
            frozen: false,
        }
    }
}

/// Bias-free linear layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    pub weight: Array2<f64>,
    pub frozen: bool,
}

impl DenseLayer {
    pub(crate) fn init(input_dim: usize, output_dim: usize, init_std: f64, rng: &mut impl Rng) -> Self {
        let normal = Normal::new(0.0, init_std).expect("valid sigma");
        DenseLayer {
            weight: Array2::from_shape_fn((output_dim, input_dim), |_| normal.sample(rng)),
            frozen: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Layer {
    Lstm(LstmLayer),
    Dense(DenseLayer),
}

impl Layer {
    pub fn input_dim(&self) -> usize {
        match self {
            Layer::Lstm(l) => l.input_dim(),
            Layer::Dense(l) => l.weight.ncols(),
        }
    }

    pub fn output_dim(&self) -> usize {
        match self {
            Layer::Lstm(l) => l.cell_dim(),
            Layer::Dense(l) => l.weight.nrows(),
        }
    }

    pub fn frozen(&self) -> bool {
        match self {
            Layer::Lstm(l) => l.frozen,
            Layer::Dense(l) => l.frozen,
        }
    }

    pub fn set_frozen(&mut self, frozen: bool) {
        match self {
            Layer::Lstm(l) => l.frozen = frozen,
            Layer::Dense(l) => l.frozen = frozen,
        }
    }
}

/// Layer stack; construction via [`Network::new`] yields `layers` recurrent
/// layers followed by one bias-free projection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    pub layers: Vec<Layer>,
}

impl Network {
    /// Fresh network: `depth` stacked recurrent layers (all but the first
    /// residual-wrapped) and a projection onto `output_width`. Weights are
    /// Gaussian with standard deviation `init_std`; biases start at zero
    /// except the forget gates at 1.
    pub fn new(
        input_width: usize,
        output_width: usize,
        cell_dim: usize,
        depth: usize,
        init_std: f64,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        if input_width < 1 || output_width < 1 || cell_dim < 1 || depth < 1 {
            return Err(Error::Config("network dimensions must be positive".into()));
        }
        let mut layers = Vec::with_capacity(depth + 1);
        for idx in 0..depth {
            let in_dim = if idx == 0 { input_width } else { cell_dim };
            layers.push(Layer::Lstm(LstmLayer::init(in_dim, cell_dim, idx > 0, init_std, rng)));
        }
        layers.push(Layer::Dense(DenseLayer::init(cell_dim, output_width, init_std, rng)));
        Ok(Network { layers })
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("networks have layers").output_dim()
    }

    /// Total number of trainable-position parameters (weights and biases).
    pub fn parameter_count(&self) -> usize {
        (0..self.block_count()).map(|b| self.block_len(b)).sum()
    }

    /// One-line structural summary, e.g.
    /// `lstm(10->20) | lstm(20->20, residual) | dense(20->8, frozen)`.
    pub fn describe(&self) -> String {
        self.layers
            .iter()
            .map(|layer| {
                let mut tags = Vec::new();
                if let Layer::Lstm(l) = layer {
                    if l.residual {
                        tags.push("residual");
                    }
                }
                if layer.frozen() {
                    tags.push("frozen");
                }
                let kind = match layer {
                    Layer::Lstm(_) => "lstm",
                    Layer::Dense(_) => "dense",
                };
                let tag = if tags.is_empty() {
                    String::new()
                } else {
                    format!(", {}", tags.join(", "))
                };
                format!("{kind}({}->{}{tag})", layer.input_dim(), layer.output_dim())
            })
            .collect::<Vec<_>>()
            .join(" | ")
    }

    /// Sum of squared weights over unfrozen layers, biases excluded.
    pub fn l2_sum(&self) -> f64 {
        self.layers
            .iter()
            .filter(|l| !l.frozen())
            .map(|l| match l {
                Layer::Lstm(l) => {
                    l.w_input.iter().map(|w| w * w).sum::<f64>()
                        + l.w_recurrent.iter().map(|w| w * w).sum::<f64>()
                }
                Layer::Dense(l) => l.weight.iter().map(|w| w * w).sum::<f64>(),
            })
            .sum()
    }

    /// Predictions for each window of one series, in order, starting from
    /// zero recurrent state.
    pub fn forward(&self, windows: &[Window]) -> Vec<Array1<f64>> {
        self.forward_tape::<rand_chacha::ChaCha8Rng>(windows, 0.0, None).0
    }

    /// Like [`Network::forward`] but adds zero-mean Gaussian noise with
    /// standard deviation `noise_std` to every input vector.
    pub fn forward_noisy<R: Rng>(
        &self,
        windows: &[Window],
        noise_std: f64,
        rng: &mut R,
    ) -> Vec<Array1<f64>> {
        self.forward_tape(windows, noise_std, Some(rng)).0
    }

    /// Forward pass that also records every intermediate activation for
    /// backpropagation through the window sequence.
    pub(crate) fn forward_tape<R: Rng>(
        &self,
        windows: &[Window],
        noise_std: f64,
        mut rng: Option<&mut R>,
    ) -> (Vec<Array1<f64>>, Tape) {
        let noise = Normal::new(0.0, noise_std.max(0.0)).expect("valid sigma");
        let mut states: Vec<Option<(Array1<f64>, Array1<f64>)>> = self
            .layers
            .iter()
            .map(|l| match l {
                Layer::Lstm(l) => Some((Array1::zeros(l.cell_dim()), Array1::zeros(l.cell_dim()))),
                Layer::Dense(_) => None,
            })
            .collect();
        let mut predictions = Vec::with_capacity(windows.len());
        let mut tape = Tape { steps: Vec::with_capacity(windows.len()) };
        for window in windows {
            let mut x = Array1::from_vec(window.network_input());
            if let Some(rng) = rng.as_deref_mut() {
                if noise_std > 0.0 {
                    x.mapv_inplace(|v| v + noise.sample(rng));
                }
            }
            let mut step = StepTape { layers: Vec::with_capacity(self.layers.len()) };
            for (layer, state) in self.layers.iter().zip(states.iter_mut()) {
                match layer {
                    Layer::Dense(d) => {
                        let out = d.weight.dot(&x);
                        step.layers.push(LayerTape::Dense { input: x });
                        x = out;
                    }
                    Layer::Lstm(l) => {
                        let (h_prev, c_prev) = state.take().expect("lstm state");
                        let cell = l.cell_dim();
                        let mut z = l.w_input.dot(&x);
                        z += &l.w_recurrent.dot(&h_prev);
                        z += &l.bias;
                        let i = z.slice(ndarray::s![..cell]).mapv(sigmoid);
                        let f = z.slice(ndarray::s![cell..2 * cell]).mapv(sigmoid);
                        let g = z.slice(ndarray::s![2 * cell..3 * cell]).mapv(f64::tanh);
                        let o = z.slice(ndarray::s![3 * cell..]).mapv(sigmoid);
                        let c = &f * &c_prev + &i * &g;
                        let tanh_c = c.mapv(f64::tanh);
                        let h = &o * &tanh_c;
                        let out = if l.residual { &h + &x } else { h.clone() };
                        step.layers.push(LayerTape::Lstm {
                            input: x,
                            h_prev,
                            c_prev,
                            i,
                            f,
                            g,
                            o,
                            tanh_c,
                        });
                        *state = Some((h, c));
                        x = out;
                    }
                }
            }
            predictions.push(x);
            tape.steps.push(step);
        }
        (predictions, tape)
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Recorded activations of one forward pass over a window sequence.
pub(crate) struct Tape {
    pub steps: Vec<StepTape>,
}

pub(crate) struct StepTape {
    pub layers: Vec<LayerTape>,
}

pub(crate) enum LayerTape {
    Dense {
        input: Array1<f64>,
    },
    Lstm {
        input: Array1<f64>,
        h_prev: Array1<f64>,
        c_prev: Array1<f64>,
        i: Array1<f64>,
        f: Array1<f64>,
        g: Array1<f64>,
        o: Array1<f64>,
        tanh_c: Array1<f64>,
    },
}

/// Mean absolute error over all windows and horizon steps plus
/// `l2_weight` times the squared weights of unfrozen layers.
pub fn loss(predictions: &[Array1<f64>], targets: &[&[f64]], net: &Network, l2_weight: f64) -> f64 {
    let mut total = 0.0;
    let mut count = 0usize;
    for (p, t) in predictions.iter().zip(targets) {
        for (pv, tv) in p.iter().zip(t.iter()) {
            total += (pv - tv).abs();
            count += 1;
        }
    }
    total / count.max(1) as f64 + l2_weight * net.l2_sum()
}

pub(crate) fn outer_add(target: &mut Array2<f64>, column: &Array1<f64>, row: &Array1<f64>, scale: f64) {
    for (mut out_row, &c) in target.axis_iter_mut(Axis(0)).zip(column.iter()) {
        out_row.scaled_add(scale * c, row);
    }
}
