//! Mixture-autoregressive simulation of entirely synthetic series.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::augment::stream_rng;
use crate::data::TimeSeries;
use crate::error::{Error, Result};

const MAX_STATIONARY_DRAWS: usize = 1000;

/// One autoregressive mixture component: dense lags `1..=order` plus a
/// single seasonal lag.
#[derive(Debug, Clone, PartialEq)]
pub struct ArComponent {
    /// Coefficients for lags `1..=coefficients.len()`.
    pub coefficients: Vec<f64>,
    pub seasonal_lag: usize,
    pub seasonal_coefficient: f64,
}

impl ArComponent {
    fn max_lag(&self) -> usize {
        self.coefficients.len().max(self.seasonal_lag)
    }

    /// Largest eigenvalue modulus of the companion matrix of the combined
    /// lag polynomial; the component is stationary iff this is below 1.
    pub fn companion_spectral_radius(&self) -> f64 {
        let l = self.max_lag();
        let mut lags = vec![0.0; l];
        for (i, &phi) in self.coefficients.iter().enumerate() {
            lags[i] += phi;
        }
        lags[self.seasonal_lag - 1] += self.seasonal_coefficient;
        let companion = DMatrix::from_fn(l, l, |r, c| {
            if r == 0 {
                lags[c]
            } else if r == c + 1 {
                1.0
            } else {
                0.0
            }
        });
        companion
            .complex_eigenvalues()
            .iter()
            .map(|e| e.norm())
            .fold(0.0, f64::max)
    }
}

/// A finite mixture of stationary AR components with Dirichlet-flat weights.
/// At every step one component is chosen according to the weights and emits
/// the next value with unit-variance Gaussian innovations.
#[derive(Debug, Clone, PartialEq)]
pub struct MarModel {
    pub components: Vec<ArComponent>,
    pub weights: Vec<f64>,
}

impl MarModel {
    /// Draws a model with `components` mixture components for the given
    /// seasonality. Per component: lag order uniform in {1, 2, 3}, all
    /// coefficients Gaussian with standard deviation 0.5, redrawn until the
    /// companion spectral radius is below 1.
    pub fn sample(seasonality: usize, components: usize, rng: &mut impl Rng) -> Result<Self> {
        if seasonality < 1 {
            return Err(Error::Domain("seasonality must be >= 1".into()));
        }
        if components < 2 {
            return Err(Error::Config("a mixture needs at least 2 components".into()));
        }
        let coefficient = Normal::new(0.0, 0.5).expect("valid sigma");
        let mut built = Vec::with_capacity(components);
        for _ in 0..components {
            let mut accepted = None;
            for _ in 0..MAX_STATIONARY_DRAWS {
                let order = rng.random_range(1..=3usize);
                let candidate = ArComponent {
                    coefficients: (0..order).map(|_| coefficient.sample(rng)).collect(),
                    seasonal_lag: seasonality,
                    seasonal_coefficient: coefficient.sample(rng),
                };
                if candidate.companion_spectral_radius() < 1.0 {
                    accepted = Some(candidate);
                    break;
                }
            }
            built.push(accepted.ok_or_else(|| {
                Error::Numeric(format!(
                    "no stationary component found in {MAX_STATIONARY_DRAWS} draws"
                ))
            })?);
        }
        let mut weights: Vec<f64> = (0..components)
            .map(|_| -(1.0 - rng.random::<f64>()).ln())
            .collect();
        let total: f64 = weights.iter().sum();
        if total > 0.0 {
            for w in &mut weights {
                *w /= total;
            }
        } else {
            weights = vec![1.0 / components as f64; components];
        }
        Ok(MarModel {
            components: built,
            weights,
        })
    }

    /// Simulates `length` values after discarding a burn-in of
    /// `50 + 2 * seasonal_lag` steps started from zero history.
    pub fn simulate(&self, length: usize, rng: &mut impl Rng) -> Vec<f64> {
        let max_lag = self
            .components
            .iter()
            .map(ArComponent::max_lag)
            .max()
            .expect("models have components");
        let burn_in = 50 + 2 * self.components[0].seasonal_lag;
        let total = burn_in + length;
        let mut x = vec![0.0; max_lag + total];
        for t in max_lag..max_lag + total {
            let u: f64 = rng.random();
            let mut pick = self.components.len() - 1;
            let mut cumulative = 0.0;
            for (idx, &w) in self.weights.iter().enumerate() {
                cumulative += w;
                if u < cumulative {
                    pick = idx;
                    break;
                }
            }
            let c = &self.components[pick];
            let mut v: f64 = rng.sample(StandardNormal);
            for (lag, &phi) in c.coefficients.iter().enumerate() {
                v += phi * x[t - lag - 1];
            }
            v += c.seasonal_coefficient * x[t - c.seasonal_lag];
            x[t] = v;
        }
        x[max_lag + burn_in..].to_vec()
    }
}

/// Simulated series together with the models that produced them. Output `k`
/// is generated from stream `k` of `seed` and mapped affinely onto
/// `[1, 100]`; the burn-in demands `length > 2 * seasonality + 50`.
pub fn gratis_generate_with_models(
    seasonality: usize,
    length: usize,
    count: usize,
    components: usize,
    seed: u64,
) -> Result<Vec<(TimeSeries, MarModel)>> {
    if length <= 2 * seasonality + 50 {
        return Err(Error::Domain(format!(
            "simulated length {length} must exceed the burn-in of {}",
            2 * seasonality + 50
        )));
    }
    (0..count)
        .map(|k| {
            let mut rng = stream_rng(seed, k as u64);
            let model = MarModel::sample(seasonality, components, &mut rng)?;
            let raw = model.simulate(length, &mut rng);
            let min = raw.iter().copied().fold(f64::INFINITY, f64::min);
            let max = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let values: Vec<f64> = if max > min {
                raw.iter().map(|&v| 1.0 + 99.0 * (v - min) / (max - min)).collect()
            } else {
                vec![50.5; raw.len()]
            };
            let series = TimeSeries::new(format!("mar__aug{k}"), values)?;
            Ok((series, model))
        })
        .collect()
}

/// Like [`gratis_generate_with_models`] but returns only the series.
pub fn gratis_generate(
    seasonality: usize,
    length: usize,
    count: usize,
    components: usize,
    seed: u64,
) -> Result<Vec<TimeSeries>> {
    Ok(gratis_generate_with_models(seasonality, length, count, components, seed)?
        .into_iter()
        .map(|(series, _)| series)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sampled_models_are_stationary_with_unit_weights() {
        for k in 0..50 {
            let mut rng = stream_rng(77, k);
            let model = MarModel::sample(12, 4, &mut rng).unwrap();
            assert_eq!(model.components.len(), 4);
            let sum: f64 = model.weights.iter().sum();
            assert!((sum - 1.0).abs() < 1e-12, "weight sum {sum}");
            for c in &model.components {
                assert!((1..=3).contains(&c.coefficients.len()));
                assert_eq!(c.seasonal_lag, 12);
                assert!(c.companion_spectral_radius() < 1.0);
            }
        }
    }

    #[test]
    fn outputs_live_on_the_target_range() {
        let out = gratis_generate(4, 80, 20, 4, 3).unwrap();
        assert_eq!(out.len(), 20);
        for (k, s) in out.iter().enumerate() {
            assert_eq!(s.id, format!("mar__aug{k}"));
            assert_eq!(s.len(), 80);
            let min = s.values.iter().copied().fold(f64::INFINITY, f64::min);
            let max = s.values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            assert!((min - 1.0).abs() < 1e-9, "min {min}");
            assert!((max - 100.0).abs() < 1e-9, "max {max}");
        }
    }

    #[test]
    fn generation_is_deterministic_per_seed() {
        let a = gratis_generate(4, 80, 5, 4, 11).unwrap();
        let b = gratis_generate(4, 80, 5, 4, 11).unwrap();
        assert_eq!(a, b);
        let c = gratis_generate(4, 80, 5, 4, 12).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn burn_in_and_mixture_size_are_enforced() {
        assert!(gratis_generate(12, 74, 1, 4, 0).is_err());
        assert!(gratis_generate(12, 75, 1, 4, 0).is_ok());
        let mut rng = stream_rng(0, 0);
        assert!(MarModel::sample(12, 1, &mut rng).is_err());
    }

    #[test]
    fn companion_radius_matches_known_ar1() {
        let component = ArComponent {
            coefficients: vec![0.7],
            seasonal_lag: 1,
            seasonal_coefficient: 0.1,
        };
        // Combined lag-1 coefficient is 0.8.
        assert!((component.companion_spectral_radius() - 0.8).abs() < 1e-12);
        let explosive = ArComponent {
            coefficients: vec![0.9, 0.3],
            seasonal_lag: 2,
            seasonal_coefficient: 0.0,
        };
        // Roots of z^2 - 0.9 z - 0.3: radius > 1.
        assert!(explosive.companion_spectral_radius() > 1.0);
    }
}
