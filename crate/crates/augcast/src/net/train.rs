//! Minibatch training loop: gradient steps on shuffled groups of whole
//! series, per-epoch validation on each series' held-out last window, and
//! selection of the epoch with the lowest validation error.

use std::collections::BTreeMap;

use ndarray::Array1;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::net::grad::backward;
use crate::net::{cocob_step, Gradients, Hyperparameters, Network, OptimizerState};
use crate::pipeline::WindowSet;

/// Result of a training run.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters from the epoch with the lowest validation error.
    pub network: Network,
    /// Mean absolute validation error after each epoch.
    pub validation_history: Vec<f64>,
    /// Index into `validation_history` of the returned parameters; the
    /// earliest epoch wins ties.
    pub best_epoch: usize,
}

/// Trains a copy of `initial` on `data` and returns the parameters of the
/// best validation epoch. The run is fully determined by `seed`: the same
/// inputs produce bitwise-identical outcomes.
///
/// Each epoch performs `epoch_size` passes over the data. A pass shuffles
/// the series order and walks it in groups of `minibatch` series; each group
/// contributes one gradient step. Within a series, recurrent state flows
/// across its windows in order and is reset before the next series. Gaussian
/// noise (`noise_std`) is added to inputs during gradient passes only.
pub fn train(
    initial: &Network,
    data: &BTreeMap<String, WindowSet>,
    hp: &Hyperparameters,
    seed: u64,
) -> Result<TrainOutcome> {
    if data.is_empty() {
        return Err(Error::Domain("no series to train on".into()));
    }
    if hp.minibatch < 1 || hp.epoch_size < 1 || hp.max_epochs < 1 {
        return Err(Error::Config(
            "minibatch, epoch_size, and max_epochs must be at least 1".into(),
        ));
    }
    let m = initial.output_dim();
    for (id, ws) in data {
        if ws.training().is_empty() {
            return Err(Error::Domain(format!(
                "series {id} has no training window; it is too short for this input/horizon"
            )));
        }
        for w in &ws.windows {
            if w.network_input().len() != initial.input_dim() {
                return Err(Error::Validation(format!(
                    "series {id}: window input width {} does not match network input {}",
                    w.network_input().len(),
                    initial.input_dim()
                )));
            }
            if w.target.len() != m {
                return Err(Error::Validation(format!(
                    "series {id}: target length {} does not match network output {}",
                    w.target.len(),
                    m
                )));
            }
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut net = initial.clone();
    let mut optimizer = OptimizerState::new(&net);
    let sets: Vec<&WindowSet> = data.values().collect();
    let mut order: Vec<usize> = (0..sets.len()).collect();

    let mut validation_history = Vec::with_capacity(hp.max_epochs);
    let mut best_epoch = 0usize;
    let mut best_error = f64::INFINITY;
    let mut best_net = net.clone();

    for epoch in 0..hp.max_epochs {
        for _ in 0..hp.epoch_size {
            order.shuffle(&mut rng);
            for batch in order.chunks(hp.minibatch) {
                let window_total: usize =
                    batch.iter().map(|&s| sets[s].training().len()).sum();
                let scale = 1.0 / (window_total * m) as f64;
                let mut grads = Gradients::zeros(&net);
                for &s in batch {
                    let windows = sets[s].training();
                    let (predictions, tape) =
                        net.forward_tape(windows, hp.noise_std, Some(&mut rng));
                    let dpreds: Vec<Array1<f64>> = predictions
                        .iter()
                        .zip(windows)
                        .map(|(p, w)| {
                            Array1::from_iter(p.iter().zip(&w.target).map(|(&pv, &tv)| {
                                if pv > tv {
                                    scale
                                } else if pv < tv {
                                    -scale
                                } else {
                                    0.0
                                }
                            }))
                        })
                        .collect();
                    backward(&net, &tape, &dpreds, &mut grads);
                }
                grads.add_l2(&net, hp.l2_weight);
                grads.zero_frozen(&net);
                cocob_step(&mut net, &grads, &mut optimizer);
            }
        }
        let error = validation_error(&net, &sets);
        validation_history.push(error);
        if error < best_error {
            best_error = error;
            best_epoch = epoch;
            best_net = net.clone();
        }
    }

    Ok(TrainOutcome { network: best_net, validation_history, best_epoch })
}

/// Mean absolute error on each series' validation window, with recurrent
/// state built by running every window of the series (no noise).
pub fn validation_error(net: &Network, sets: &[&WindowSet]) -> f64 {
    let mut total = 0.0;
    let mut count = 0usize;
    for ws in sets {
        let predictions = net.forward(&ws.windows);
        let last = predictions.last().expect("window sets are never empty");
        for (p, t) in last.iter().zip(&ws.validation().target) {
            total += (p - t).abs();
            count += 1;
        }
    }
    total / count.max(1) as f64
}
