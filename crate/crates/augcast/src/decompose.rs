//! Additive seasonal-trend decomposition with a loess trend smoother.
//!
//! The seasonal component is estimated in periodic mode (one value per
//! seasonal index), so `seasonal[t] == seasonal[t + period]` holds exactly and
//! the component can be extended past the end of the series without
//! approximation. The remainder is defined as `x - seasonal - trend`, which
//! makes reconstruction exact by construction.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Additive components of a series: `x = seasonal + trend + remainder`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decomposition {
    pub period: usize,
    pub seasonal: Vec<f64>,
    pub trend: Vec<f64>,
    pub remainder: Vec<f64>,
}

impl Decomposition {
    pub fn len(&self) -> usize {
        self.seasonal.len()
    }

    pub fn is_empty(&self) -> bool {
        self.seasonal.is_empty()
    }

    /// Seasonal value at `t`, extending the last observed cycle periodically
    /// past the end of the series. Because the seasonal component is exactly
    /// periodic, in-range positions are unaffected by the extension rule.
    pub fn seasonal_at(&self, t: usize) -> f64 {
        let len = self.len();
        if t < len {
            self.seasonal[t]
        } else {
            self.seasonal[len - self.period + (t - len) % self.period]
        }
    }
}

/// Tuning knobs for [`stl_decompose`]. Defaults match the classic two-pass
/// inner loop without robustness reweighting.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DecomposeConfig {
    /// Seasonal/trend refinement passes.
    pub inner_iterations: usize,
    /// Trend smoother window; when `None` it is derived from the period and
    /// series length (see [`trend_span`]).
    pub trend_span: Option<usize>,
}

impl Default for DecomposeConfig {
    fn default() -> Self {
        DecomposeConfig {
            inner_iterations: 2,
            trend_span: None,
        }
    }
}

/// Default trend smoother window: the next odd integer at or above
/// `1.5 * period / (1 - 1.5 / (0.1 * len))`, clamped to at least 7 and at
/// most the largest odd integer not exceeding `len`.
pub fn trend_span(len: usize, period: usize) -> usize {
    let max_odd = if len % 2 == 0 { len.saturating_sub(1) } else { len };
    let denom = 1.0 - 1.5 / (0.1 * len as f64);
    let raw = 1.5 * period as f64 / denom;
    let lower = if raw.is_finite() && raw.signum() > 0.0 {
        let mut next = raw.ceil() as usize;
        if next % 2 == 0 {
            next += 1;
        }
        next.max(7)
    } else if raw == f64::INFINITY {
        max_odd.max(7)
    } else {
        7
    };
    lower.min(max_odd.max(1))
}

/// Splits `x` into seasonal, trend, and remainder components.
///
/// With `seasonality == 1` the seasonal component is identically zero and the
/// trend is a loess smooth of `x` itself. Otherwise the series must contain
/// at least two full cycles.
pub fn stl_decompose(x: &[f64], seasonality: usize, cfg: &DecomposeConfig) -> Result<Decomposition> {
    if seasonality < 1 {
        return Err(Error::Domain("seasonality must be >= 1".into()));
    }
    let n = x.len();
    if n < 2 * seasonality {
        return Err(Error::Domain(format!(
            "series of length {n} is shorter than two cycles of {seasonality}"
        )));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("series contains non-finite values".into()));
    }
    let span = cfg.trend_span.unwrap_or_else(|| trend_span(n, seasonality));

    let mut seasonal = vec![0.0; n];
    let mut trend = vec![0.0; n];
    if seasonality == 1 {
        trend = loess(x, span);
    } else {
        for _ in 0..cfg.inner_iterations.max(1) {
            // Cycle-index means of the detrended series, centred so the
            // seasonal component carries no level. Centring by the cycle mean
            // is what a length-`seasonality` moving average removes from an
            // exactly periodic signal.
            let mut sums = vec![0.0; seasonality];
            let mut counts = vec![0usize; seasonality];
            for (t, (&v, &tr)) in x.iter().zip(trend.iter()).enumerate() {
                sums[t % seasonality] += v - tr;
                counts[t % seasonality] += 1;
            }
            let means: Vec<f64> = sums
                .iter()
                .zip(&counts)
                .map(|(&s, &c)| s / c as f64)
                .collect();
            let level = means.iter().sum::<f64>() / seasonality as f64;
            for (t, s) in seasonal.iter_mut().enumerate() {
                *s = means[t % seasonality] - level;
            }
            let deseasonalized: Vec<f64> =
                x.iter().zip(&seasonal).map(|(&v, &s)| v - s).collect();
            trend = loess(&deseasonalized, span);
        }
    }
    let remainder: Vec<f64> = x
        .iter()
        .zip(seasonal.iter().zip(&trend))
        .map(|(&v, (&s, &t))| v - s - t)
        .collect();
    Ok(Decomposition {
        period: seasonality,
        seasonal,
        trend,
        remainder,
    })
}

/// Locally weighted degree-1 regression over index positions with tricube
/// weights. `span` is the number of nearest neighbours considered per point;
/// collinear inputs are reproduced exactly.
pub fn loess(y: &[f64], span: usize) -> Vec<f64> {
    let n = y.len();
    let q = span.clamp(1, n);
    let mut out = vec![0.0; n];
    for (i, o) in out.iter_mut().enumerate() {
        let mut lo = i.saturating_sub((q - 1) / 2);
        if lo + q > n {
            lo = n - q;
        }
        let hi = lo + q;
        let dmax = (i - lo).max(hi - 1 - i) as f64;
        let (mut s0, mut s1, mut s2, mut t0, mut t1) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for j in lo..hi {
            let u = j as f64 - i as f64;
            let w = if dmax > 0.0 {
                tricube((u / dmax).abs())
            } else {
                1.0
            };
            s0 += w;
            s1 += w * u;
            s2 += w * u * u;
            t0 += w * y[j];
            t1 += w * u * y[j];
        }
        let det = s0 * s2 - s1 * s1;
        *o = if det.abs() > 1e-12 * s0 * s2.max(1.0) {
            (s2 * t0 - s1 * t1) / det
        } else {
            t0 / s0
        };
    }
    out
}

fn tricube(u: f64) -> f64 {
    if u >= 1.0 {
        0.0
    } else {
        let c = 1.0 - u * u * u;
        c * c * c
    }
}
