//! Dataset ingestion, holdout splitting, and the seasonal-naive baseline.
//!
//! Series files are long-format CSV (`series_id,t,value`, `t` zero-based and
//! contiguous per series). Dataset metadata lives in a small TOML file next to
//! the data: `name`, `seasonality`, `horizon`, `paradigm` (`"DS"` or `"SE"`),
//! and optionally `input_window`.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Local-normalization flavour used by the preprocessing pipeline.
///
/// `Ds` removes the seasonal component before windowing and normalizes by the
/// trend value at the end of each input window; `Se` keeps the seasonality in
/// the modelled signal, normalizes by the input-window mean, and feeds the
/// seasonal component of the output window to the network as extra inputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Paradigm {
    #[serde(rename = "DS")]
    Ds,
    #[serde(rename = "SE")]
    Se,
}

impl fmt::Display for Paradigm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Paradigm::Ds => write!(f, "DS"),
            Paradigm::Se => write!(f, "SE"),
        }
    }
}

impl FromStr for Paradigm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "DS" | "ds" => Ok(Paradigm::Ds),
            "SE" | "se" => Ok(Paradigm::Se),
            other => Err(Error::Config(format!(
                "unknown paradigm {other:?}; expected \"DS\" or \"SE\""
            ))),
        }
    }
}

/// A single univariate series: non-empty, finite, non-negative values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    pub id: String,
    pub values: Vec<f64>,
}

impl TimeSeries {
    pub fn new(id: impl Into<String>, values: Vec<f64>) -> Result<Self> {
        let series = TimeSeries {
            id: id.into(),
            values,
        };
        series.validate()?;
        Ok(series)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    fn validate(&self) -> Result<()> {
        if self.values.is_empty() {
            return Err(Error::Validation(format!("series {:?} is empty", self.id)));
        }
        for (t, &v) in self.values.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::Domain(format!(
                    "series {:?} has non-finite value at t={t}",
                    self.id
                )));
            }
            if v < 0.0 {
                return Err(Error::Domain(format!(
                    "series {:?} has negative value {v} at t={t}",
                    self.id
                )));
            }
        }
        if self.values.iter().all(|&v| v == 0.0) {
            return Err(Error::Domain(format!(
                "series {:?} is identically zero",
                self.id
            )));
        }
        Ok(())
    }
}

/// Declarative description of a dataset, read from a TOML file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub name: String,
    pub seasonality: usize,
    pub horizon: usize,
    pub paradigm: Paradigm,
    /// Input window length; when absent, `ceil(1.25 * horizon)` is used.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input_window: Option<usize>,
}

impl DatasetMeta {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        let meta: DatasetMeta = toml::from_str(&text).map_err(|e| Error::Parse {
            path: path.display().to_string(),
            line: e.span().map(|s| line_of_offset(&text, s.start)).unwrap_or(0),
            msg: e.message().to_string(),
        })?;
        meta.validate()?;
        Ok(meta)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let text = toml::to_string(self).map_err(|e| Error::Config(e.to_string()))?;
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn input_window_len(&self) -> usize {
        self.input_window
            .unwrap_or_else(|| (1.25 * self.horizon as f64).ceil() as usize)
    }

    fn validate(&self) -> Result<()> {
        if self.name.is_empty() {
            return Err(Error::Config("dataset name is empty".into()));
        }
        if self.seasonality < 1 {
            return Err(Error::Config("seasonality must be >= 1".into()));
        }
        if self.horizon < 1 {
            return Err(Error::Config("horizon must be >= 1".into()));
        }
        if self.input_window == Some(0) {
            return Err(Error::Config("input_window must be >= 1".into()));
        }
        Ok(())
    }
}

fn line_of_offset(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].bytes().filter(|&b| b == b'\n').count() + 1
}

/// A named collection of series sharing one seasonality, horizon, and paradigm.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Dataset {
    pub name: String,
    pub seasonality: usize,
    pub horizon: usize,
    pub paradigm: Paradigm,
    /// Input window length `n` used to build training windows.
    pub input_window: usize,
    pub series: Vec<TimeSeries>,
}

impl Dataset {
    /// Builds a dataset as ingested from disk: every series must be long
    /// enough for one training window, one validation window, and one test
    /// window (`n + 2 * horizon` points).
    pub fn new(meta: &DatasetMeta, series: Vec<TimeSeries>) -> Result<Self> {
        let d = Self::derived(meta.name.clone(), meta, series)?;
        let min_len = d.input_window + 2 * d.horizon;
        for s in &d.series {
            if s.len() < min_len {
                return Err(Error::Validation(format!(
                    "series {:?} has length {} but at least {} points are needed \
                     (input window {} plus two horizons of {})",
                    s.id,
                    s.len(),
                    min_len,
                    d.input_window,
                    d.horizon
                )));
            }
        }
        Ok(d)
    }

    /// Builds a dataset derived from an ingested one (a holdout split, an
    /// augmented pool): series only need room for a single window.
    pub fn derived(name: String, meta: &DatasetMeta, series: Vec<TimeSeries>) -> Result<Self> {
        let n = meta.input_window_len();
        meta.validate()?;
        if series.is_empty() {
            return Err(Error::Validation("dataset has no series".into()));
        }
        let min_len = n + meta.horizon;
        let mut seen = std::collections::BTreeSet::new();
        for s in &series {
            s.validate()?;
            if !seen.insert(s.id.clone()) {
                return Err(Error::Validation(format!("duplicate series id {:?}", s.id)));
            }
            if s.len() < min_len {
                return Err(Error::Validation(format!(
                    "series {:?} has length {} but windows of {} input and {} output \
                     points need at least {}",
                    s.id,
                    s.len(),
                    n,
                    meta.horizon,
                    min_len
                )));
            }
        }
        Ok(Dataset {
            name,
            seasonality: meta.seasonality,
            horizon: meta.horizon,
            paradigm: meta.paradigm,
            input_window: n,
            series,
        })
    }

    pub fn meta(&self) -> DatasetMeta {
        DatasetMeta {
            name: self.name.clone(),
            seasonality: self.seasonality,
            horizon: self.horizon,
            paradigm: self.paradigm,
            input_window: Some(self.input_window),
        }
    }

    /// Length of the longest series.
    pub fn max_len(&self) -> usize {
        self.series.iter().map(TimeSeries::len).max().unwrap_or(0)
    }

    pub fn get(&self, id: &str) -> Option<&TimeSeries> {
        self.series.iter().find(|s| s.id == id)
    }
}

#[derive(Debug, Deserialize, Serialize)]
struct CsvRow<'a> {
    series_id: std::borrow::Cow<'a, str>,
    t: usize,
    value: f64,
}

/// Reads a long-format CSV and validates it against `meta`.
pub fn load_dataset(data_path: impl AsRef<Path>, meta: &DatasetMeta) -> Result<Dataset> {
    let series = read_series_csv(data_path)?;
    Dataset::new(meta, series)
}

/// Reads `series_id,t,value` rows, preserving series order of first
/// appearance. `t` must start at 0 and increment by 1 within each series.
pub fn read_series_csv(path: impl AsRef<Path>) -> Result<Vec<TimeSeries>> {
    let path = path.as_ref();
    let display = path.display().to_string();
    let mut reader = csv::Reader::from_path(path).map_err(|e| csv_error(&display, e))?;
    let mut order: Vec<String> = Vec::new();
    let mut values: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    let mut raw = csv::StringRecord::new();
    let header = reader.headers().map_err(|e| csv_error(&display, e))?.clone();
    while reader.read_record(&mut raw).map_err(|e| csv_error(&display, e))? {
        let line = raw.position().map(|p| p.line() as usize).unwrap_or(0);
        let row: CsvRow = raw.deserialize(Some(&header)).map_err(|e| Error::Parse {
            path: display.clone(),
            line,
            msg: e.to_string(),
        })?;
        let id = row.series_id.as_ref();
        let entry = match values.get_mut(id) {
            Some(v) => v,
            None => {
                order.push(id.to_string());
                values.entry(id.to_string()).or_default()
            }
        };
        if row.t != entry.len() {
            return Err(Error::Parse {
                path: display,
                line,
                msg: format!(
                    "series {:?} has t={} where {} was expected (t must be \
                     0-based and contiguous)",
                    id,
                    row.t,
                    entry.len()
                ),
            });
        }
        entry.push(row.value);
    }
    order
        .into_iter()
        .map(|id| {
            let vals = values.remove(&id).expect("id recorded on first sight");
            TimeSeries::new(id, vals)
        })
        .collect()
}

/// Writes series in the same long-format CSV accepted by [`read_series_csv`].
/// Values are written in shortest round-trip form, so a load of the output
/// reproduces the input bit for bit.
pub fn write_series_csv(path: impl AsRef<Path>, series: &[TimeSeries]) -> Result<()> {
    let path = path.as_ref();
    let display = path.display().to_string();
    let mut writer = csv::Writer::from_path(path).map_err(|e| csv_error(&display, e))?;
    writer
        .write_record(["series_id", "t", "value"])
        .map_err(|e| csv_error(&display, e))?;
    for s in series {
        for (t, v) in s.values.iter().enumerate() {
            writer
                .write_record([s.id.as_str(), &t.to_string(), &v.to_string()])
                .map_err(|e| csv_error(&display, e))?;
        }
    }
    writer.flush()?;
    Ok(())
}

pub(crate) fn csv_error(path: &str, e: csv::Error) -> Error {
    let line = match e.position() {
        Some(p) => p.line() as usize,
        None => 0,
    };
    Error::Parse {
        path: path.to_string(),
        line,
        msg: e.to_string(),
    }
}

/// Removes the last `horizon` points of every series. Returns the shortened
/// training dataset plus the removed points keyed by series id.
pub fn split_holdout(dataset: &Dataset) -> Result<(Dataset, BTreeMap<String, Vec<f64>>)> {
    let m = dataset.horizon;
    let mut train = Vec::with_capacity(dataset.series.len());
    let mut actuals = BTreeMap::new();
    for s in &dataset.series {
        if s.len() < m + 1 {
            return Err(Error::Validation(format!(
                "series {:?} is too short ({} points) to hold out {m}",
                s.id,
                s.len()
            )));
        }
        let cut = s.len() - m;
        train.push(TimeSeries {
            id: s.id.clone(),
            values: s.values[..cut].to_vec(),
        });
        actuals.insert(s.id.clone(), s.values[cut..].to_vec());
    }
    let meta = dataset.meta();
    let train = Dataset::derived(dataset.name.clone(), &meta, train)?;
    Ok((train, actuals))
}

/// Forecast that repeats the last observed seasonal cycle. For `seasonality`
/// 1 this repeats the last value. Also serves as the error scale for MASE.
pub fn seasonal_naive(train: &[f64], seasonality: usize, horizon: usize) -> Result<Vec<f64>> {
    if seasonality < 1 {
        return Err(Error::Domain("seasonality must be >= 1".into()));
    }
    if train.len() < seasonality {
        return Err(Error::Domain(format!(
            "need at least {seasonality} points for a seasonal-naive forecast, got {}",
            train.len()
        )));
    }
    let cycle = &train[train.len() - seasonality..];
    Ok((0..horizon).map(|h| cycle[h % seasonality]).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn meta(seasonality: usize, horizon: usize, input_window: Option<usize>) -> DatasetMeta {
        DatasetMeta {
            name: "test".into(),
            seasonality,
            horizon,
            paradigm: Paradigm::Ds,
            input_window,
        }
    }

    #[test]
    fn input_window_defaults_to_five_quarters_of_horizon() {
        assert_eq!(meta(12, 12, None).input_window_len(), 15);
        assert_eq!(meta(52, 8, None).input_window_len(), 10);
        assert_eq!(meta(12, 18, Some(11)).input_window_len(), 11);
    }

    #[test]
    fn csv_roundtrip_is_identity() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("series.csv");
        let series = vec![
            TimeSeries::new("a", vec![1.0, 2.5, 0.125, 3e-7]).unwrap(),
            TimeSeries::new("b", vec![4.0, 0.0, 9.75]).unwrap(),
        ];
        write_series_csv(&path, &series).unwrap();
        let loaded = read_series_csv(&path).unwrap();
        assert_eq!(series, loaded);
    }

    #[test]
    fn load_preserves_series_order_and_ids() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("series.csv");
        let mut rng = StdRng::seed_from_u64(7);
        let series: Vec<TimeSeries> = (0..111)
            .map(|i| {
                let vals = (0..30).map(|_| rng.random_range(0.5..9.5)).collect();
                TimeSeries::new(format!("s{i:03}"), vals).unwrap()
            })
            .collect();
        write_series_csv(&path, &series).unwrap();
        let loaded = load_dataset(&path, &meta(4, 5, Some(6))).unwrap();
        assert_eq!(loaded.series.len(), 111);
        for (i, s) in loaded.series.iter().enumerate() {
            assert_eq!(s.id, format!("s{i:03}"));
        }
    }

    #[test]
    fn short_series_is_rejected() {
        let m = meta(2, 8, None);
        let series = vec![TimeSeries::new("a", vec![1.0; 5]).unwrap()];
        let err = Dataset::new(&m, series).unwrap_err();
        assert!(matches!(err, Error::Validation(_)), "{err}");
        assert!(err.to_string().contains("\"a\""));
    }

    #[test]
    fn negative_and_all_zero_series_are_rejected() {
        assert!(matches!(
            TimeSeries::new("a", vec![1.0, -0.5]).unwrap_err(),
            Error::Domain(_)
        ));
        assert!(matches!(
            TimeSeries::new("a", vec![0.0, 0.0]).unwrap_err(),
            Error::Domain(_)
        ));
        assert!(matches!(
            TimeSeries::new("a", vec![1.0, f64::NAN]).unwrap_err(),
            Error::Domain(_)
        ));
    }

    #[test]
    fn non_contiguous_t_is_a_parse_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("series.csv");
        std::fs::write(&path, "series_id,t,value\na,0,1.0\na,2,2.0\n").unwrap();
        let err = read_series_csv(&path).unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other}"),
        }
    }

    #[test]
    fn seasonal_naive_repeats_last_cycle() {
        assert_eq!(seasonal_naive(&[1.0, 2.0, 3.0, 4.0], 2, 2).unwrap(), vec![3.0, 4.0]);
        assert_eq!(
            seasonal_naive(&[1.0, 2.0, 3.0, 4.0], 2, 4).unwrap(),
            vec![3.0, 4.0, 3.0, 4.0]
        );
        assert_eq!(seasonal_naive(&[1.0, 2.0, 5.0], 1, 3).unwrap(), vec![5.0, 5.0, 5.0]);
        assert!(seasonal_naive(&[1.0, 2.0], 3, 1).is_err());
    }

    #[test]
    fn holdout_split_is_lossless() {
        let mut rng = StdRng::seed_from_u64(42);
        for _ in 0..100 {
            let horizon = rng.random_range(1..6);
            let n = rng.random_range(1..8);
            let len = n + 2 * horizon + rng.random_range(0..20);
            let m = meta(rng.random_range(1..5), horizon, Some(n));
            let series: Vec<TimeSeries> = (0..rng.random_range(1..6))
                .map(|i| {
                    let vals = (0..len).map(|_| rng.random_range(0.1..100.0)).collect();
                    TimeSeries::new(format!("s{i}"), vals).unwrap()
                })
                .collect();
            let original = Dataset::new(&m, series).unwrap();
            let (train, actuals) = split_holdout(&original).unwrap();
            for s in &original.series {
                let t = train.get(&s.id).unwrap();
                let a = &actuals[&s.id];
                assert_eq!(a.len(), horizon);
                let mut rebuilt = t.values.clone();
                rebuilt.extend_from_slice(a);
                assert_eq!(rebuilt, s.values);
            }
        }
    }

    #[test]
    fn meta_roundtrips_through_toml() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("meta.toml");
        let m = DatasetMeta {
            name: "nn5".into(),
            seasonality: 52,
            horizon: 8,
            paradigm: Paradigm::Se,
            input_window: None,
        };
        m.save(&path).unwrap();
        let loaded = DatasetMeta::load(&path).unwrap();
        assert_eq!(loaded.name, "nn5");
        assert_eq!(loaded.seasonality, 52);
        assert_eq!(loaded.horizon, 8);
        assert_eq!(loaded.paradigm, Paradigm::Se);
        assert_eq!(loaded.input_window, None);
    }

    #[test]
    fn bad_meta_reports_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("meta.toml");
        std::fs::write(&path, "name = \"x\"\nseasonality = \"weekly\"\n").unwrap();
        match DatasetMeta::load(&path).unwrap_err() {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other}"),
        }
    }
}
