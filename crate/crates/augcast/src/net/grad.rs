//! Exact gradients of the training loss via backpropagation through the
//! window sequence, plus a finite-difference cross-check.

use ndarray::{concatenate, Array1, Array2, Axis};
use rand::Rng;

use crate::error::{Error, Result};
use crate::net::{outer_add, Layer, LayerTape, Network, Tape};
use crate::pipeline::Window;

/// Gradient arrays mirroring the parameter blocks of a [`Network`].
#[derive(Debug, Clone)]
pub struct Gradients {
    pub layers: Vec<LayerGrad>,
}

#[derive(Debug, Clone)]
pub enum LayerGrad {
    Lstm {
        w_input: Array2<f64>,
        w_recurrent: Array2<f64>,
        bias: Array1<f64>,
    },
    Dense {
        weight: Array2<f64>,
    },
}

impl Gradients {
    pub fn zeros(net: &Network) -> Self {
        let layers = net
            .layers
            .iter()
            .map(|l| match l {
                Layer::Lstm(l) => LayerGrad::Lstm {
                    w_input: Array2::zeros(l.w_input.raw_dim()),
                    w_recurrent: Array2::zeros(l.w_recurrent.raw_dim()),
                    bias: Array1::zeros(l.bias.raw_dim()),
                },
                Layer::Dense(d) => LayerGrad::Dense {
                    weight: Array2::zeros(d.weight.raw_dim()),
                },
            })
            .collect();
        Gradients { layers }
    }

    /// Adds the gradient of the squared-weight penalty (`2 * l2_weight * w`)
    /// to the weight blocks of unfrozen layers; biases carry no penalty.
    pub fn add_l2(&mut self, net: &Network, l2_weight: f64) {
        for (grad, layer) in self.layers.iter_mut().zip(&net.layers) {
            if layer.frozen() {
                continue;
            }
            match (grad, layer) {
                (LayerGrad::Lstm { w_input, w_recurrent, .. }, Layer::Lstm(l)) => {
                    w_input.scaled_add(2.0 * l2_weight, &l.w_input);
                    w_recurrent.scaled_add(2.0 * l2_weight, &l.w_recurrent);
                }
                (LayerGrad::Dense { weight }, Layer::Dense(d)) => {
                    weight.scaled_add(2.0 * l2_weight, &d.weight);
                }
                _ => unreachable!("gradients mirror the network"),
            }
        }
    }

    /// Clears the gradients of frozen layers so optimizers cannot move them.
    pub fn zero_frozen(&mut self, net: &Network) {
        for (grad, layer) in self.layers.iter_mut().zip(&net.layers) {
            if !layer.frozen() {
                continue;
            }
            match grad {
                LayerGrad::Lstm { w_input, w_recurrent, bias } => {
                    w_input.fill(0.0);
                    w_recurrent.fill(0.0);
                    bias.fill(0.0);
                }
                LayerGrad::Dense { weight } => weight.fill(0.0),
            }
        }
    }
}

/// Backpropagates `dpreds` (one gradient vector per window) through a
/// recorded forward pass, accumulating into `grads`.
pub(crate) fn backward(net: &Network, tape: &Tape, dpreds: &[Array1<f64>], grads: &mut Gradients) {
    debug_assert_eq!(tape.steps.len(), dpreds.len());
    let mut carried: Vec<Option<(Array1<f64>, Array1<f64>)>> = vec![None; net.layers.len()];
    for (step, dpred) in tape.steps.iter().zip(dpreds).rev() {
        let mut d = dpred.clone();
        for idx in (0..net.layers.len()).rev() {
            match (&net.layers[idx], &step.layers[idx], &mut grads.layers[idx]) {
                (Layer::Dense(dl), LayerTape::Dense { input }, LayerGrad::Dense { weight }) => {
                    outer_add(weight, &d, input, 1.0);
                    d = dl.weight.t().dot(&d);
                }
                (
                    Layer::Lstm(l),
                    LayerTape::Lstm { input, h_prev, c_prev, i, f, g, o, tanh_c },
                    LayerGrad::Lstm { w_input, w_recurrent, bias },
                ) => {
                    let cell = l.cell_dim();
                    let (dh_carry, dc_carry) = carried[idx]
                        .take()
                        .unwrap_or_else(|| (Array1::zeros(cell), Array1::zeros(cell)));
                    let dh = &d + &dh_carry;
                    let d_o = &dh * tanh_c;
                    let mut dc = &dh * o;
                    dc.zip_mut_with(tanh_c, |v, &tc| *v *= 1.0 - tc * tc);
                    dc += &dc_carry;
                    let di = &dc * g;
                    let dg = &dc * i;
                    let df = &dc * c_prev;
                    let dc_prev = &dc * f;
                    let dz_i = di * &i.mapv(|v| v * (1.0 - v));
                    let dz_f = df * &f.mapv(|v| v * (1.0 - v));
                    let dz_g = dg * &g.mapv(|v| 1.0 - v * v);
                    let dz_o = d_o * &o.mapv(|v| v * (1.0 - v));
                    let dz = concatenate(
                        Axis(0),
                        &[dz_i.view(), dz_f.view(), dz_g.view(), dz_o.view()],
                    )
                    .expect("gate slices share length");
                    outer_add(w_input, &dz, input, 1.0);
                    outer_add(w_recurrent, &dz, h_prev, 1.0);
                    *bias += &dz;
                    let du = l.w_input.t().dot(&dz);
                    let dh_prev = l.w_recurrent.t().dot(&dz);
                    carried[idx] = Some((dh_prev, dc_prev));
                    d = if l.residual { du + &d } else { du };
                }
                _ => unreachable!("tape and gradients mirror the network"),
            }
        }
    }
}

/// Loss over `windows` (mean absolute error plus weight penalty) and its
/// exact gradients. Frozen layers receive zero gradient.
pub fn gradients(net: &Network, windows: &[Window], l2_weight: f64) -> Result<(f64, Gradients)> {
    if windows.is_empty() {
        return Err(Error::Domain("no windows to differentiate over".into()));
    }
    if windows.iter().any(|w| w.target.is_empty()) {
        return Err(Error::Domain("windows must carry targets".into()));
    }
    let (predictions, tape) = net.forward_tape::<rand_chacha::ChaCha8Rng>(windows, 0.0, None);
    let m = net.output_dim();
    let scale = 1.0 / (windows.len() * m) as f64;
    let mut value = 0.0;
    let dpreds: Vec<Array1<f64>> = predictions
        .iter()
        .zip(windows)
        .map(|(p, w)| {
            Array1::from_iter(p.iter().zip(&w.target).map(|(&pv, &tv)| {
                value += (pv - tv).abs() * scale;
                let diff = pv - tv;
                if diff > 0.0 {
                    scale
                } else if diff < 0.0 {
                    -scale
                } else {
                    0.0
                }
            }))
        })
        .collect();
    value += l2_weight * net.l2_sum();
    let mut grads = Gradients::zeros(net);
    backward(net, &tape, &dpreds, &mut grads);
    grads.add_l2(net, l2_weight);
    grads.zero_frozen(net);
    Ok((value, grads))
}

/// Compares analytic gradients against central finite differences at
/// `per_block` randomly chosen parameters of every block, returning the
/// largest relative error observed. Gradients near zero on both sides are
/// counted as agreeing.
pub fn finite_difference_check(
    net: &mut Network,
    windows: &[Window],
    l2_weight: f64,
    per_block: usize,
    step: f64,
    rng: &mut impl Rng,
) -> Result<f64> {
    let (_, analytic) = gradients(net, windows, l2_weight)?;
    let block_count = net.block_count();
    let mut worst = 0.0f64;
    for block in 0..block_count {
        let len = net.block_len(block);
        for _ in 0..per_block.min(len) {
            let idx = rng.random_range(0..len);
            let original = net.block_param(block, idx);
            net.set_block_param(block, idx, original + step);
            let up = loss_of(net, windows, l2_weight)?;
            net.set_block_param(block, idx, original - step);
            let down = loss_of(net, windows, l2_weight)?;
            net.set_block_param(block, idx, original);
            let numeric = (up - down) / (2.0 * step);
            let exact = analytic.block_param(block, idx);
            let denom = numeric.abs().max(exact.abs());
            if denom > 1e-10 {
                worst = worst.max((numeric - exact).abs() / denom);
            }
        }
    }
    Ok(worst)
}

fn loss_of(net: &Network, windows: &[Window], l2_weight: f64) -> Result<f64> {
    let predictions = net.forward(windows);
    let targets: Vec<&[f64]> = windows.iter().map(|w| w.target.as_slice()).collect();
    Ok(crate::net::loss(&predictions, &targets, net, l2_weight))
}

impl Network {
    /// Parameter blocks in canonical order: per recurrent layer the input
    /// weights, recurrent weights, and biases; per dense layer its weights.
    pub fn block_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| match l {
                Layer::Lstm(_) => 3,
                Layer::Dense(_) => 1,
            })
            .sum()
    }

    fn locate(&self, block: usize) -> (usize, usize) {
        let mut remaining = block;
        for (idx, layer) in self.layers.iter().enumerate() {
            let blocks = match layer {
                Layer::Lstm(_) => 3,
                Layer::Dense(_) => 1,
            };
            if remaining < blocks {
                return (idx, remaining);
            }
            remaining -= blocks;
        }
        panic!("block index {block} out of range");
    }

    pub(crate) fn block_len(&self, block: usize) -> usize {
        let (layer, part) = self.locate(block);
        match (&self.layers[layer], part) {
            (Layer::Lstm(l), 0) => l.w_input.len(),
            (Layer::Lstm(l), 1) => l.w_recurrent.len(),
            (Layer::Lstm(l), 2) => l.bias.len(),
            (Layer::Dense(d), 0) => d.weight.len(),
            _ => unreachable!(),
        }
    }

    pub(crate) fn block_frozen(&self, block: usize) -> bool {
        let (layer, _) = self.locate(block);
        self.layers[layer].frozen()
    }

    pub(crate) fn block_slice(&self, block: usize) -> &[f64] {
        let (layer, part) = self.locate(block);
        match (&self.layers[layer], part) {
            (Layer::Lstm(l), 0) => l.w_input.as_slice().expect("standard layout"),
            (Layer::Lstm(l), 1) => l.w_recurrent.as_slice().expect("standard layout"),
            (Layer::Lstm(l), 2) => l.bias.as_slice().expect("standard layout"),
            (Layer::Dense(d), 0) => d.weight.as_slice().expect("standard layout"),
            _ => unreachable!(),
        }
    }

    pub(crate) fn block_slice_mut(&mut self, block: usize) -> &mut [f64] {
        let (layer, part) = self.locate(block);
        match (&mut self.layers[layer], part) {
            (Layer::Lstm(l), 0) => l.w_input.as_slice_mut().expect("standard layout"),
            (Layer::Lstm(l), 1) => l.w_recurrent.as_slice_mut().expect("standard layout"),
            (Layer::Lstm(l), 2) => l.bias.as_slice_mut().expect("standard layout"),
            (Layer::Dense(d), 0) => d.weight.as_slice_mut().expect("standard layout"),
            _ => unreachable!(),
        }
    }

    fn block_param(&self, block: usize, idx: usize) -> f64 {
        self.block_slice(block)[idx]
    }

    fn set_block_param(&mut self, block: usize, idx: usize, value: f64) {
        self.block_slice_mut(block)[idx] = value;
    }
}

impl Gradients {
    fn locate(&self, block: usize) -> (usize, usize) {
        let mut remaining = block;
        for (idx, grad) in self.layers.iter().enumerate() {
            let blocks = match grad {
                LayerGrad::Lstm { .. } => 3,
                LayerGrad::Dense { .. } => 1,
            };
            if remaining < blocks {
                return (idx, remaining);
            }
            remaining -= blocks;
        }
        panic!("block index {block} out of range");
    }

    pub(crate) fn block_slice(&self, block: usize) -> &[f64] {
        let (layer, part) = self.locate(block);
        match (&self.layers[layer], part) {
            (LayerGrad::Lstm { w_input, .. }, 0) => w_input.as_slice().expect("standard layout"),
            (LayerGrad::Lstm { w_recurrent, .. }, 1) => {
                w_recurrent.as_slice().expect("standard layout")
            }
            (LayerGrad::Lstm { bias, .. }, 2) => bias.as_slice().expect("standard layout"),
            (LayerGrad::Dense { weight }, 0) => weight.as_slice().expect("standard layout"),
            _ => unreachable!(),
        }
    }

    fn block_param(&self, block: usize, idx: usize) -> f64 {
        self.block_slice(block)[idx]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_windows(rng: &mut ChaCha8Rng, count: usize, n: usize, m: usize) -> Vec<Window> {
        use rand::Rng;
        (0..count)
            .map(|k| Window {
                position: n - 1 + k,
                input: (0..n).map(|_| rng.random_range(-1.0..1.0)).collect(),
                target: (0..m).map(|_| rng.random_range(-1.0..1.0)).collect(),
                seasonal_exo: Vec::new(),
                norm_factor: 0.0,
            })
            .collect()
    }

    #[test]
    fn analytic_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let mut net = Network::new(4, 3, 6, 2, 0.4, &mut rng).unwrap();
        let windows = random_windows(&mut rng, 5, 4, 3);
        let worst =
            finite_difference_check(&mut net, &windows, 3e-4, 20, 1e-5, &mut rng).unwrap();
        assert!(worst < 1e-4, "max relative error {worst}");
    }

    #[test]
    fn finite_differences_also_cover_dense_only_paths() {
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        let mut net = Network::new(3, 2, 5, 1, 0.5, &mut rng).unwrap();
        // Append an extra projection so mid-stack dense layers get exercised.
        let extra = crate::net::DenseLayer::init(2, 2, 0.5, &mut rng);
        net.layers.push(Layer::Dense(extra));
        let windows = random_windows(&mut rng, 4, 3, 2);
        let worst =
            finite_difference_check(&mut net, &windows, 2e-4, 20, 1e-5, &mut rng).unwrap();
        assert!(worst < 1e-4, "max relative error {worst}");
    }

    #[test]
    fn frozen_layers_get_exactly_zero_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(44);
        let mut net = Network::new(3, 2, 5, 2, 0.4, &mut rng).unwrap();
        net.layers[0].set_frozen(true);
        let windows = random_windows(&mut rng, 3, 3, 2);
        let (_, grads) = gradients(&net, &windows, 4e-4).unwrap();
        match &grads.layers[0] {
            LayerGrad::Lstm { w_input, w_recurrent, bias } => {
                assert!(w_input.iter().all(|&g| g == 0.0));
                assert!(w_recurrent.iter().all(|&g| g == 0.0));
                assert!(bias.iter().all(|&g| g == 0.0));
            }
            _ => panic!("layer 0 is recurrent"),
        }
        match &grads.layers[1] {
            LayerGrad::Lstm { w_input, .. } => {
                assert!(w_input.iter().any(|&g| g != 0.0), "unfrozen layer still learns");
            }
            _ => panic!("layer 1 is recurrent"),
        }
    }

    #[test]
    fn gradients_require_targets() {
        let mut rng = ChaCha8Rng::seed_from_u64(45);
        let net = Network::new(2, 2, 5, 1, 0.4, &mut rng).unwrap();
        let mut windows = random_windows(&mut rng, 2, 2, 2);
        windows[1].target.clear();
        assert!(gradients(&net, &windows, 1e-4).is_err());
        assert!(gradients(&net, &[], 1e-4).is_err());
    }
}
