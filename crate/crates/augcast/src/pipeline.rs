//! Per-series preprocessing and the inverse transform for forecasts.
//!
//! Each series is divided by its mean, moved to log scale (with a +1 offset
//! when the dataset contains zeros), and decomposed. Depending on the
//! paradigm the modelled sequence is either the deseasonalized signal (DS,
//! normalized per window by the trend value at the end of the input) or the
//! full log signal (SE, normalized by the input-window mean, with the
//! seasonal values of the output window passed along as extra inputs).
//! [`postprocess`] inverts the whole chain.

use std::collections::BTreeMap;

use crate::data::{Dataset, Paradigm};
use crate::decompose::{stl_decompose, DecomposeConfig, Decomposition};
use crate::error::{Error, Result};

/// Everything needed to map model-space values of one series back to the
/// original scale.
#[derive(Debug, Clone)]
pub struct PreprocessState {
    pub series_id: String,
    /// Mean of the series on the original scale; divisor of the first step.
    pub scale: f64,
    /// 1.0 when the dataset contains zeros and `ln(x + 1)` was used, else 0.0.
    pub log_offset: f64,
    /// Decomposition of the scaled log series.
    pub decomposition: Decomposition,
    pub paradigm: Paradigm,
}

/// One stride-1 window over a series' modelled sequence. `input` and
/// `target` already have `norm_factor` subtracted.
#[derive(Debug, Clone)]
pub struct Window {
    /// Index of the last input point within the modelled sequence.
    pub position: usize,
    pub input: Vec<f64>,
    /// Model-space targets; empty for the forecast window that reaches past
    /// the end of the series.
    pub target: Vec<f64>,
    /// Seasonal values at the target positions (SE paradigm only).
    pub seasonal_exo: Vec<f64>,
    pub norm_factor: f64,
}

impl Window {
    /// The vector the network consumes: window input plus any seasonal
    /// exogenous values.
    pub fn network_input(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.input.len() + self.seasonal_exo.len());
        v.extend_from_slice(&self.input);
        v.extend_from_slice(&self.seasonal_exo);
        v
    }
}

/// All windows of one series in chronological order. The last entry of
/// `windows` is the validation window and is excluded from gradient updates;
/// `forecast` extends past the end of the series and carries no target.
#[derive(Debug, Clone)]
pub struct WindowSet {
    pub series_id: String,
    pub windows: Vec<Window>,
    pub forecast: Window,
}

impl WindowSet {
    pub fn validation(&self) -> &Window {
        self.windows.last().expect("window sets are never empty")
    }

    /// Windows that participate in gradient updates.
    pub fn training(&self) -> &[Window] {
        &self.windows[..self.windows.len() - 1]
    }
}

/// Transforms every series of `d` into model space and cuts stride-1 windows
/// with `input_window` inputs and `horizon` targets.
pub fn preprocess(
    d: &Dataset,
) -> Result<(BTreeMap<String, PreprocessState>, BTreeMap<String, WindowSet>)> {
    let offset = if d
        .series
        .iter()
        .flat_map(|s| s.values.iter())
        .any(|&v| v == 0.0)
    {
        1.0
    } else {
        0.0
    };
    let n = d.input_window;
    let m = d.horizon;
    let cfg = DecomposeConfig::default();
    let mut states = BTreeMap::new();
    let mut windows = BTreeMap::new();
    for s in &d.series {
        let scale = s.values.iter().sum::<f64>() / s.len() as f64;
        if !(scale > 0.0) {
            return Err(Error::Domain(format!(
                "series {:?} has non-positive mean {scale}",
                s.id
            )));
        }
        let logged: Vec<f64> = s.values.iter().map(|&v| (v / scale + offset).ln()).collect();
        let decomposition = stl_decompose(&logged, d.seasonality, &cfg)?;
        let model: Vec<f64> = match d.paradigm {
            Paradigm::Ds => logged
                .iter()
                .zip(&decomposition.seasonal)
                .map(|(&v, &sc)| v - sc)
                .collect(),
            Paradigm::Se => logged,
        };
        let state = PreprocessState {
            series_id: s.id.clone(),
            scale,
            log_offset: offset,
            decomposition,
            paradigm: d.paradigm,
        };
        let p = model.len();
        if p < n + m {
            return Err(Error::Validation(format!(
                "series {:?} yields no window of {n}+{m} points",
                s.id
            )));
        }
        let mut ws = Vec::with_capacity(p - n - m + 2);
        for j in 0..=(p - n - m) {
            ws.push(cut_window(&model, &state, j, n, m));
        }
        let forecast = cut_window(&model, &state, p - n, n, m);
        windows.insert(
            s.id.clone(),
            WindowSet {
                series_id: s.id.clone(),
                windows: ws,
                forecast,
            },
        );
        states.insert(s.id.clone(), state);
    }
    Ok((states, windows))
}

fn cut_window(model: &[f64], state: &PreprocessState, j: usize, n: usize, m: usize) -> Window {
    let p = model.len();
    let input_raw = &model[j..j + n];
    let position = j + n - 1;
    let norm_factor = match state.paradigm {
        Paradigm::Ds => state.decomposition.trend[position],
        Paradigm::Se => input_raw.iter().sum::<f64>() / n as f64,
    };
    let input: Vec<f64> = input_raw.iter().map(|&v| v - norm_factor).collect();
    let target: Vec<f64> = if j + n + m <= p {
        model[j + n..j + n + m].iter().map(|&v| v - norm_factor).collect()
    } else {
        Vec::new()
    };
    let seasonal_exo: Vec<f64> = match state.paradigm {
        Paradigm::Se => (j + n..j + n + m)
            .map(|t| state.decomposition.seasonal_at(t))
            .collect(),
        Paradigm::Ds => Vec::new(),
    };
    Window {
        position,
        input,
        target,
        seasonal_exo,
        norm_factor,
    }
}

/// Maps model-space predictions for `window` back to the original scale:
/// re-add the normalization factor (and, under DS, the periodically extended
/// seasonal component), invert the log transform, rescale, and clamp
/// negatives to zero.
pub fn postprocess(prediction: &[f64], window: &Window, state: &PreprocessState) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(prediction.len());
    for (i, &p) in prediction.iter().enumerate() {
        if !p.is_finite() {
            return Err(Error::Numeric(format!(
                "series {:?}: non-finite prediction at step {}",
                state.series_id,
                i + 1
            )));
        }
        let mut y = p + window.norm_factor;
        if state.paradigm == Paradigm::Ds {
            y += state.decomposition.seasonal_at(window.position + 1 + i);
        }
        let v = (y.exp() - state.log_offset) * state.scale;
        out.push(if v < 0.0 { 0.0 } else { v });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{DatasetMeta, TimeSeries};
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn random_dataset(rng: &mut StdRng, paradigm: Paradigm, with_zero: bool) -> Dataset {
        let seasonality = rng.random_range(1..8);
        let horizon = rng.random_range(1..5);
        let n = rng.random_range(2..7);
        let len = (n + 2 * horizon).max(2 * seasonality) + rng.random_range(5..40);
        let meta = DatasetMeta {
            name: "rand".into(),
            seasonality,
            horizon,
            paradigm,
            input_window: Some(n),
        };
        let series: Vec<TimeSeries> = (0..rng.random_range(1..4))
            .map(|i| {
                let mut vals: Vec<f64> =
                    (0..len).map(|_| rng.random_range(0.5..50.0)).collect();
                if with_zero && i == 0 {
                    vals[len / 2] = 0.0;
                }
                TimeSeries::new(format!("s{i}"), vals).unwrap()
            })
            .collect();
        Dataset::new(&meta, series).unwrap()
    }

    #[test]
    fn roundtrip_recovers_original_values() {
        let mut rng = StdRng::seed_from_u64(3);
        for trial in 0..100 {
            let paradigm = if trial % 2 == 0 { Paradigm::Ds } else { Paradigm::Se };
            let d = random_dataset(&mut rng, paradigm, trial % 5 == 0);
            let (states, windows) = preprocess(&d).unwrap();
            for s in &d.series {
                let ws = &windows[&s.id];
                let st = &states[&s.id];
                for w in &ws.windows {
                    let rebuilt = postprocess(&w.target, w, st).unwrap();
                    for (i, &r) in rebuilt.iter().enumerate() {
                        let original = s.values[w.position + 1 + i];
                        assert!(
                            (r - original).abs() < 1e-6,
                            "trial {trial} series {} pos {}: {r} vs {original}",
                            s.id,
                            w.position + 1 + i
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn window_layout_matches_series_length() {
        let mut rng = StdRng::seed_from_u64(9);
        let d = random_dataset(&mut rng, Paradigm::Ds, false);
        let (_, windows) = preprocess(&d).unwrap();
        let n = d.input_window;
        let m = d.horizon;
        for s in &d.series {
            let ws = &windows[&s.id];
            assert_eq!(ws.windows.len(), s.len() - n - m + 1);
            assert_eq!(ws.validation().position, s.len() - m - 1);
            assert_eq!(ws.forecast.position, s.len() - 1);
            assert!(ws.forecast.target.is_empty());
            for w in &ws.windows {
                assert_eq!(w.input.len(), n);
                assert_eq!(w.target.len(), m);
            }
        }
    }

    #[test]
    fn normalization_follows_the_paradigm() {
        let mut rng = StdRng::seed_from_u64(17);
        let ds = random_dataset(&mut rng, Paradigm::Ds, false);
        let (states, windows) = preprocess(&ds).unwrap();
        for s in &ds.series {
            for w in &windows[&s.id].windows {
                assert_eq!(w.norm_factor, states[&s.id].decomposition.trend[w.position]);
                assert!(w.seasonal_exo.is_empty());
            }
        }
        let se = random_dataset(&mut rng, Paradigm::Se, false);
        let (_, windows) = preprocess(&se).unwrap();
        for s in &se.series {
            for w in &windows[&s.id].windows {
                // Inputs had the window mean removed, so they now average 0.
                let mean: f64 = w.input.iter().sum::<f64>() / w.input.len() as f64;
                assert!(mean.abs() < 1e-9);
                assert_eq!(w.seasonal_exo.len(), se.horizon);
            }
        }
    }

    #[test]
    fn zero_anywhere_switches_to_offset_log() {
        let mut rng = StdRng::seed_from_u64(23);
        let with_zero = random_dataset(&mut rng, Paradigm::Ds, true);
        let (states, _) = preprocess(&with_zero).unwrap();
        assert!(states.values().all(|st| st.log_offset == 1.0));
        let positive = random_dataset(&mut rng, Paradigm::Ds, false);
        let (states, _) = preprocess(&positive).unwrap();
        assert!(states.values().all(|st| st.log_offset == 0.0));
    }

    #[test]
    fn postprocess_clamps_negatives_and_rejects_nan() {
        let mut rng = StdRng::seed_from_u64(29);
        let d = random_dataset(&mut rng, Paradigm::Ds, true);
        let (states, windows) = preprocess(&d).unwrap();
        let id = &d.series[0].id;
        let w = windows[id].validation();
        let low = vec![-30.0; d.horizon];
        let out = postprocess(&low, w, &states[id]).unwrap();
        assert!(out.iter().all(|&v| v == 0.0), "{out:?}");
        let bad = vec![f64::NAN; d.horizon];
        assert!(postprocess(&bad, w, &states[id]).is_err());
    }
}
