//! Learning-rate-free optimizer based on continuous coin betting. Each
//! parameter keeps a running gradient-magnitude bound, a cumulative absolute
//! gradient, a reward pot, and a bet; no step size needs tuning.

use crate::net::{Gradients, Network};

const DEFAULT_ALPHA: f64 = 100.0;

/// Per-parameter optimizer statistics, mirroring a network's blocks.
#[derive(Debug, Clone)]
pub struct OptimizerState {
    alpha: f64,
    blocks: Vec<CocobBlock>,
}

#[derive(Debug, Clone)]
struct CocobBlock {
    bound: Vec<f64>,
    grad_sum: Vec<f64>,
    reward: Vec<f64>,
    bet: Vec<f64>,
    initial: Vec<f64>,
}

impl OptimizerState {
    /// Fresh state anchored at the network's current parameters.
    pub fn new(net: &Network) -> Self {
        let blocks = (0..net.block_count())
            .map(|b| {
                let params = net.block_slice(b);
                CocobBlock {
                    bound: vec![0.0; params.len()],
                    grad_sum: vec![0.0; params.len()],
                    reward: vec![0.0; params.len()],
                    bet: vec![0.0; params.len()],
                    initial: params.to_vec(),
                }
            })
            .collect();
        OptimizerState { alpha: DEFAULT_ALPHA, blocks }
    }
}

/// Applies one optimizer update in place. Frozen layers and parameters that
/// have never seen a nonzero gradient are left untouched.
pub fn cocob_step(net: &mut Network, grads: &Gradients, state: &mut OptimizerState) {
    assert_eq!(state.blocks.len(), net.block_count(), "state mirrors the network");
    for b in 0..net.block_count() {
        if net.block_frozen(b) {
            continue;
        }
        let grad = grads.block_slice(b);
        let block = &mut state.blocks[b];
        let params = net.block_slice_mut(b);
        debug_assert_eq!(grad.len(), params.len());
        for k in 0..params.len() {
            let g = grad[k];
            block.bound[k] = block.bound[k].max(g.abs());
            let bound = block.bound[k];
            if bound == 0.0 {
                continue;
            }
            block.grad_sum[k] += g.abs();
            block.reward[k] = (block.reward[k] - (params[k] - block.initial[k]) * g).max(0.0);
            block.bet[k] -= g;
            let denominator = bound * (block.grad_sum[k] + bound).max(state.alpha * bound);
            params[k] =
                block.initial[k] + block.bet[k] / denominator * (bound + block.reward[k]);
        }
    }
}
