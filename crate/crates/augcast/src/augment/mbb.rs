//! Moving-block bootstrap of decomposition remainders.

use rand::Rng;

use crate::augment::{stream_rng, AugmentConfig};
use crate::data::TimeSeries;
use crate::decompose::{stl_decompose, DecomposeConfig, Decomposition};
use crate::error::{Error, Result};

/// Resamples `remainder` by concatenating contiguous blocks of
/// `block_length` points drawn uniformly with replacement, then dropping a
/// uniformly random number of leading points (less than one block) and
/// truncating to the original length.
pub fn bootstrap_remainder(
    remainder: &[f64],
    block_length: usize,
    rng: &mut impl Rng,
) -> Result<Vec<f64>> {
    let n = remainder.len();
    if block_length < 2 {
        return Err(Error::Config("block length must be at least 2".into()));
    }
    if block_length > n {
        return Err(Error::Domain(format!(
            "remainder of length {n} is shorter than one block of {block_length}"
        )));
    }
    let blocks = n / block_length + 2;
    let mut assembled = Vec::with_capacity(blocks * block_length);
    for _ in 0..blocks {
        let start = rng.random_range(0..=n - block_length);
        assembled.extend_from_slice(&remainder[start..start + block_length]);
    }
    let trim = rng.random_range(0..block_length);
    Ok(assembled[trim..trim + n].to_vec())
}

/// Decomposes `x` on its original scale and returns the decomposition
/// together with `count` bootstrapped remainders. Randomness for bootstrap
/// `j` comes from stream `stream_base + j` of `cfg.seed`.
pub fn mbb_remainders(
    x: &TimeSeries,
    seasonality: usize,
    cfg: &AugmentConfig,
    stream_base: u64,
    count: usize,
) -> Result<(Decomposition, Vec<Vec<f64>>)> {
    let decomposition = stl_decompose(&x.values, seasonality, &DecomposeConfig::default())?;
    let block_length = cfg.mbb_block_length(seasonality);
    let remainders = (0..count)
        .map(|j| {
            let mut rng = stream_rng(cfg.seed, stream_base + j as u64);
            bootstrap_remainder(&decomposition.remainder, block_length, &mut rng)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((decomposition, remainders))
}

/// Bootstrapped variants of `x`: seasonal and trend components are kept as
/// estimated, the remainder is block-resampled, and negative sums are
/// clamped to zero. Output `j` is named `<id>__aug<j>`.
pub fn mbb_augment(x: &TimeSeries, seasonality: usize, cfg: &AugmentConfig) -> Result<Vec<TimeSeries>> {
    mbb_augment_streamed(x, seasonality, cfg, 0, cfg.per_series)
}

pub(crate) fn mbb_augment_streamed(
    x: &TimeSeries,
    seasonality: usize,
    cfg: &AugmentConfig,
    stream_base: u64,
    count: usize,
) -> Result<Vec<TimeSeries>> {
    let (decomposition, remainders) = mbb_remainders(x, seasonality, cfg, stream_base, count)?;
    remainders
        .into_iter()
        .enumerate()
        .map(|(j, remainder)| {
            let values: Vec<f64> = decomposition
                .seasonal
                .iter()
                .zip(decomposition.trend.iter().zip(&remainder))
                .map(|(&s, (&t, &r))| (s + t + r).max(0.0))
                .collect();
            TimeSeries::new(format!("{}__aug{j}", x.id), values)
        })
        .collect()
}
