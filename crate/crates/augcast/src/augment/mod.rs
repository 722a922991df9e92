//! Series generation methods for enlarging small datasets.
//!
//! Three generators are available: block-bootstrapping of decomposition
//! remainders ([`mbb`]), warped averaging of sampled series ([`dba`]), and
//! fully synthetic mixture-autoregressive simulation ([`mar`]). All of them
//! derive the randomness of output `k` from stream `k` of the configured
//! seed, so results do not depend on scheduling order.

pub mod dba;
pub mod dtw;
pub mod mar;
pub mod mbb;

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use dba::{asd_generate, dba_average, weighted_warp_cost};
pub use dtw::{dtw_distance, WarpPath};
pub use mar::{gratis_generate, gratis_generate_with_models, ArComponent, MarModel};
pub use mbb::{bootstrap_remainder, mbb_augment, mbb_remainders};

use crate::data::{Dataset, TimeSeries};
use crate::error::{Error, Result};

/// Generation method used for augmentation and for naming strategies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Method {
    Mbb,
    Dba,
    Gratis,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Mbb, Method::Dba, Method::Gratis];
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::Mbb => write!(f, "MBB"),
            Method::Dba => write!(f, "DBA"),
            Method::Gratis => write!(f, "GRATIS"),
        }
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "MBB" => Ok(Method::Mbb),
            "DBA" => Ok(Method::Dba),
            "GRATIS" => Ok(Method::Gratis),
            other => Err(Error::Config(format!(
                "unknown method {other:?}; expected MBB, DBA, or GRATIS"
            ))),
        }
    }
}

/// Settings shared by all generators. Build with [`AugmentConfig::new`] and
/// the `with_*` methods.
#[derive(Debug, Clone)]
pub struct AugmentConfig {
    pub method: Method,
    /// Outputs per original series (default 10).
    pub per_series: usize,
    /// Overrides the total output count when set.
    pub total_override: Option<usize>,
    pub seed: u64,
    /// Bootstrap block length; default `max(2 * seasonality, 8)`.
    pub block_length: Option<usize>,
    /// Barycenter refinement passes (default 10).
    pub dba_iterations: usize,
    /// Mixture components of the simulator (default 4).
    pub mar_components: usize,
    /// Simulated series length; default is the longest series in the dataset.
    pub mar_length: Option<usize>,
}

impl AugmentConfig {
    pub fn new(method: Method) -> Self {
        AugmentConfig {
            method,
            per_series: 10,
            total_override: None,
            seed: 0,
            block_length: None,
            dba_iterations: 10,
            mar_components: 4,
            mar_length: None,
        }
    }

    pub fn with_per_series(mut self, per_series: usize) -> Self {
        self.per_series = per_series;
        self
    }

    pub fn with_total(mut self, total: usize) -> Self {
        self.total_override = Some(total);
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_block_length(mut self, block_length: usize) -> Self {
        self.block_length = Some(block_length);
        self
    }

    pub fn with_dba_iterations(mut self, iterations: usize) -> Self {
        self.dba_iterations = iterations;
        self
    }

    pub fn with_mar_components(mut self, components: usize) -> Self {
        self.mar_components = components;
        self
    }

    pub fn with_mar_length(mut self, length: usize) -> Self {
        self.mar_length = Some(length);
        self
    }

    /// Total number of series to generate for a dataset of `n_series`.
    pub fn total_count(&self, n_series: usize) -> usize {
        self.total_override.unwrap_or(n_series * self.per_series)
    }

    pub fn mbb_block_length(&self, seasonality: usize) -> usize {
        self.block_length.unwrap_or((2 * seasonality).max(8))
    }

    pub fn validate(&self) -> Result<()> {
        if self.per_series < 1 {
            return Err(Error::Config("per_series must be at least 1".into()));
        }
        if self.total_override == Some(0) {
            return Err(Error::Config("total_override must be positive".into()));
        }
        if let Some(b) = self.block_length {
            if b < 2 {
                return Err(Error::Config("block length must be at least 2".into()));
            }
        }
        if self.dba_iterations < 1 {
            return Err(Error::Config("dba_iterations must be at least 1".into()));
        }
        if self.mar_components < 2 {
            return Err(Error::Config("mar_components must be at least 2".into()));
        }
        Ok(())
    }
}

/// Runs the configured generator over a dataset. The total output count is
/// `per_series` per original series unless overridden; generated ids carry
/// an `__aug<k>` suffix so they can be told apart from ingested series.
pub fn generate(d: &Dataset, cfg: &AugmentConfig) -> Result<Vec<TimeSeries>> {
    cfg.validate()?;
    let n = d.series.len();
    match cfg.method {
        Method::Mbb => {
            let total = cfg.total_count(n);
            let base = total / n;
            let extra = total % n;
            let mut out = Vec::with_capacity(total);
            let mut stream = 0u64;
            for (i, s) in d.series.iter().enumerate() {
                let count = base + usize::from(i < extra);
                out.extend(mbb::mbb_augment_streamed(s, d.seasonality, cfg, stream, count)?);
                stream += count as u64;
            }
            Ok(out)
        }
        Method::Dba => asd_generate(d, cfg),
        Method::Gratis => {
            let length = cfg.mar_length.unwrap_or_else(|| d.max_len());
            gratis_generate(
                d.seasonality,
                length,
                cfg.total_count(n),
                cfg.mar_components,
                cfg.seed,
            )
        }
    }
}

/// Independent random stream `stream` of `seed`.
pub(crate) fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
