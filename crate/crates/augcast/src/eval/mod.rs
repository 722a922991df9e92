//! Forecast accuracy metrics, per-dataset aggregation, and cross-method
//! ranking. The two percentage errors compare forecast and actual
//! magnitudes symmetrically; the scaled error divides by the in-sample
//! accuracy of a seasonal-naive forecast on the training portion.

mod stats;

pub use stats::{
    chi_square_p, friedman_test, hochberg_adjust, normal_two_sided_p, posthoc_pvalues,
    stat_report, StatReport,
};

use crate::error::{Error, Result};

/// Denominator relaxation constant of [`smape_modified`].
pub const DEFAULT_SMAPE_EPSILON: f64 = 0.1;

/// Magnitudes below this suggest the modified percentage error: the plain
/// denominator becomes unstable near zero.
pub const SMALL_MAGNITUDE: f64 = 0.5;

fn check_lengths(forecast: &[f64], actual: &[f64]) -> Result<()> {
    if forecast.len() != actual.len() {
        return Err(Error::Validation(format!(
            "forecast has {} steps but actuals have {}",
            forecast.len(),
            actual.len()
        )));
    }
    if forecast.is_empty() {
        return Err(Error::Validation("cannot score an empty forecast".into()));
    }
    Ok(())
}

/// Symmetric mean absolute percentage error:
/// `(2/m) * sum |F_t - A_t| / (|F_t| + |A_t|)`, in `[0, 2]`.
pub fn smape(forecast: &[f64], actual: &[f64]) -> Result<f64> {
    check_lengths(forecast, actual)?;
    let mut total = 0.0;
    for (t, (&f, &a)) in forecast.iter().zip(actual).enumerate() {
        let denom = f.abs() + a.abs();
        if denom == 0.0 {
            return Err(Error::Domain(format!(
                "forecast and actual are both zero at step {}; use smape_modified",
                t + 1
            )));
        }
        total += (f - a).abs() / denom;
    }
    Ok(2.0 * total / forecast.len() as f64)
}

/// Percentage error with the denominator floored away from zero:
/// `(2/m) * sum |F_t - A_t| / max(|F_t| + |A_t| + epsilon, 0.5 + epsilon)`.
pub fn smape_modified(forecast: &[f64], actual: &[f64], epsilon: f64) -> Result<f64> {
    check_lengths(forecast, actual)?;
    if !(epsilon >= 0.0) {
        return Err(Error::Config(format!("epsilon must be non-negative, got {epsilon}")));
    }
    let floor = SMALL_MAGNITUDE + epsilon;
    let total: f64 = forecast
        .iter()
        .zip(actual)
        .map(|(&f, &a)| (f - a).abs() / (f.abs() + a.abs() + epsilon).max(floor))
        .sum();
    Ok(2.0 * total / forecast.len() as f64)
}

/// Mean absolute scaled error: forecast MAE divided by the in-sample mean
/// absolute error of the seasonal-naive method on the training portion,
/// `(1/(n-S)) * sum_{t=S+1..n} |y_t - y_{t-S}|`.
pub fn mase(forecast: &[f64], actual: &[f64], train: &[f64], seasonality: usize) -> Result<f64> {
    check_lengths(forecast, actual)?;
    if seasonality < 1 {
        return Err(Error::Domain("seasonality must be >= 1".into()));
    }
    if train.len() <= seasonality {
        return Err(Error::Domain(format!(
            "training portion has {} points; more than the seasonal period {} are needed",
            train.len(),
            seasonality
        )));
    }
    let naive_mae: f64 = train
        .windows(seasonality + 1)
        .map(|w| (w[seasonality] - w[0]).abs())
        .sum::<f64>()
        / (train.len() - seasonality) as f64;
    if naive_mae == 0.0 {
        return Err(Error::Domain(
            "training series repeats with the seasonal period exactly, so the scaled-error \
             denominator is zero"
                .into(),
        ));
    }
    let mae: f64 = forecast
        .iter()
        .zip(actual)
        .map(|(&f, &a)| (f - a).abs())
        .sum::<f64>()
        / forecast.len() as f64;
    Ok(mae / naive_mae)
}

/// Per-series errors of every method under one metric. Rows are series,
/// columns are methods; every cell must be finite.
#[derive(Debug, Clone)]
pub struct ErrorMatrix {
    methods: Vec<String>,
    series: Vec<String>,
    cells: Vec<Vec<f64>>,
}

impl ErrorMatrix {
    pub fn new(methods: Vec<String>) -> Result<Self> {
        if methods.is_empty() {
            return Err(Error::Validation("an error matrix needs at least one method".into()));
        }
        Ok(ErrorMatrix { methods, series: Vec::new(), cells: Vec::new() })
    }

    pub fn push_row(&mut self, series_id: impl Into<String>, errors: Vec<f64>) -> Result<()> {
        if errors.len() != self.methods.len() {
            return Err(Error::Validation(format!(
                "row has {} errors but the matrix has {} methods",
                errors.len(),
                self.methods.len()
            )));
        }
        let series_id = series_id.into();
        if let Some(bad) = errors.iter().find(|e| !e.is_finite()) {
            return Err(Error::Numeric(format!(
                "non-finite error {bad} for series {series_id:?}"
            )));
        }
        self.series.push(series_id);
        self.cells.push(errors);
        Ok(())
    }

    pub fn methods(&self) -> &[String] {
        &self.methods
    }

    pub fn series(&self) -> &[String] {
        &self.series
    }

    pub fn n_rows(&self) -> usize {
        self.cells.len()
    }

    pub fn n_methods(&self) -> usize {
        self.methods.len()
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.cells
    }

    fn column(&self, j: usize) -> Vec<f64> {
        self.cells.iter().map(|row| row[j]).collect()
    }
}

/// Column-wise mean and median of one method.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodAggregate {
    pub method: String,
    pub mean: f64,
    pub median: f64,
}

/// Column-wise mean and midpoint median per method, in column order.
pub fn aggregate(matrix: &ErrorMatrix) -> Result<Vec<MethodAggregate>> {
    if matrix.n_rows() == 0 {
        return Err(Error::Domain("cannot aggregate an empty error matrix".into()));
    }
    Ok((0..matrix.n_methods())
        .map(|j| {
            let column = matrix.column(j);
            MethodAggregate {
                method: matrix.methods[j].clone(),
                mean: column.iter().sum::<f64>() / column.len() as f64,
                median: median(column),
            }
        })
        .collect())
}

fn median(mut values: Vec<f64>) -> f64 {
    values.sort_unstable_by(|a, b| a.partial_cmp(b).expect("cells are finite"));
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    }
}

/// Ranks one row ascending (best = 1); ties share the mean of their
/// positions.
fn row_ranks(row: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..row.len()).collect();
    order.sort_by(|&a, &b| row[a].partial_cmp(&row[b]).expect("cells are finite"));
    let mut ranks = vec![0.0; row.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && row[order[j + 1]] == row[order[i]] {
            j += 1;
        }
        // Positions i+1 ..= j+1 share their mean rank.
        let mean_rank = (i + j + 2) as f64 / 2.0;
        for &col in &order[i..=j] {
            ranks[col] = mean_rank;
        }
        i = j + 1;
    }
    ranks
}

/// Average rank of every method across rows (column order preserved).
pub fn average_ranks(matrix: &ErrorMatrix) -> Result<Vec<(String, f64)>> {
    if matrix.n_rows() < 1 || matrix.n_methods() < 2 {
        return Err(Error::Domain(
            "ranking needs at least one series and two methods".into(),
        ));
    }
    let mut sums = vec![0.0; matrix.n_methods()];
    for row in &matrix.cells {
        for (sum, rank) in sums.iter_mut().zip(row_ranks(row)) {
            *sum += rank;
        }
    }
    Ok(matrix
        .methods
        .iter()
        .zip(sums)
        .map(|(m, s)| (m.clone(), s / matrix.n_rows() as f64))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn matrix(methods: &[&str], rows: &[&[f64]]) -> ErrorMatrix {
        let mut m = ErrorMatrix::new(methods.iter().map(|s| s.to_string()).collect()).unwrap();
        for (i, row) in rows.iter().enumerate() {
            m.push_row(format!("s{i}"), row.to_vec()).unwrap();
        }
        m
    }

    #[test]
    fn smape_hand_values() {
        assert_eq!(smape(&[3.0, 4.0], &[3.0, 4.0]).unwrap(), 0.0);
        let v = smape(&[11.0], &[9.0]).unwrap();
        assert!((v - 0.2).abs() < 1e-15, "{v}");
        let err = smape(&[0.0], &[0.0]).unwrap_err();
        assert!(err.to_string().contains("smape_modified"));
        assert!(smape(&[1.0], &[1.0, 2.0]).is_err());
        assert!(smape(&[], &[]).is_err());
    }

    #[test]
    fn smape_is_symmetric_and_bounded() {
        let cases = [
            (vec![1.0, 8.0, 0.2], vec![3.0, 0.5, 0.2]),
            (vec![100.0], vec![0.001]),
            (vec![5.0, 5.0], vec![5.0, 0.1]),
        ];
        for (f, a) in cases {
            let fa = smape(&f, &a).unwrap();
            let af = smape(&a, &f).unwrap();
            assert_eq!(fa, af);
            assert!((0.0..=2.0).contains(&fa));
            let m = smape_modified(&f, &a, DEFAULT_SMAPE_EPSILON).unwrap();
            assert_eq!(m, smape_modified(&a, &f, DEFAULT_SMAPE_EPSILON).unwrap());
            assert!((0.0..=2.0).contains(&m));
        }
    }

    #[test]
    fn smape_modified_hand_values() {
        assert_eq!(smape_modified(&[0.0], &[0.0], 0.1).unwrap(), 0.0);
        let v = smape_modified(&[1.0], &[0.0], 0.1).unwrap();
        assert!((v - 2.0 / 1.1).abs() < 1e-15, "{v}");
        assert_eq!(DEFAULT_SMAPE_EPSILON, 0.1);
        assert!(smape_modified(&[1.0], &[1.0], -0.2).is_err());
    }

    #[test]
    fn mase_hand_values() {
        assert_eq!(mase(&[2.0], &[2.0], &[1.0, 5.0], 1).unwrap(), 0.0);
        let v = mase(&[5.0], &[6.0], &[1.0, 2.0, 3.0, 4.0], 1).unwrap();
        assert!((v - 1.0).abs() < 1e-15, "{v}");
        let err = mase(&[1.0], &[2.0], &[1.0, 2.0, 1.0, 2.0], 2).unwrap_err();
        assert!(err.to_string().contains("denominator"));
        assert!(mase(&[1.0], &[2.0], &[1.0, 2.0], 2).is_err(), "train too short");
    }

    #[test]
    fn mase_is_scale_invariant() {
        let f = [5.0, 7.0];
        let a = [6.0, 6.5];
        let train = [1.0, 4.0, 2.0, 5.5, 3.0];
        let base = mase(&f, &a, &train, 2).unwrap();
        for c in [0.1, 3.7, 1000.0] {
            let scale = |v: &[f64]| v.iter().map(|x| x * c).collect::<Vec<_>>();
            let scaled = mase(&scale(&f), &scale(&a), &scale(&train), 2).unwrap();
            assert!((scaled - base).abs() < 1e-12 * base.max(1.0), "c={c}");
        }
    }

    #[test]
    fn aggregate_hand_values() {
        let m = matrix(&["a"], &[&[1.0], &[2.0], &[3.0]]);
        let agg = aggregate(&m).unwrap();
        assert_eq!(agg[0].mean, 2.0);
        assert_eq!(agg[0].median, 2.0);
        let m = matrix(&["a"], &[&[1.0], &[2.0], &[3.0], &[10.0]]);
        let agg = aggregate(&m).unwrap();
        assert_eq!(agg[0].mean, 4.0);
        assert_eq!(agg[0].median, 2.5);
        let single = matrix(&["a", "b"], &[&[0.7, 0.9]]);
        let agg = aggregate(&single).unwrap();
        assert_eq!((agg[0].mean, agg[0].median), (0.7, 0.7));
        assert_eq!((agg[1].mean, agg[1].median), (0.9, 0.9));
        let empty = ErrorMatrix::new(vec!["a".into()]).unwrap();
        assert!(aggregate(&empty).is_err());
    }

    #[test]
    fn matrix_rejects_ragged_or_non_finite_rows() {
        let mut m = ErrorMatrix::new(vec!["a".into(), "b".into()]).unwrap();
        assert!(m.push_row("s0", vec![1.0]).is_err());
        assert!(m.push_row("s0", vec![1.0, f64::NAN]).is_err());
        assert!(m.push_row("s0", vec![1.0, f64::INFINITY]).is_err());
        assert!(m.push_row("s0", vec![1.0, 2.0]).is_ok());
    }

    #[test]
    fn ranks_hand_values() {
        let dominance = matrix(&["a", "b"], &[&[0.1, 0.2], &[0.3, 0.5], &[0.0, 9.0]]);
        let ranks = average_ranks(&dominance).unwrap();
        assert_eq!(ranks, vec![("a".to_string(), 1.0), ("b".to_string(), 2.0)]);
        let tied = matrix(&["a", "b", "c"], &[&[4.0, 4.0, 4.0]]);
        for (_, r) in average_ranks(&tied).unwrap() {
            assert_eq!(r, 2.0);
        }
        let balanced = matrix(&["a", "b", "c"], &[&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]]);
        for (_, r) in average_ranks(&balanced).unwrap() {
            assert_eq!(r, 2.0);
        }
        let narrow = matrix(&["a"], &[&[1.0]]);
        assert!(average_ranks(&narrow).is_err());
    }

    #[test]
    fn ranks_ignore_monotone_transforms_of_rows() {
        let m = matrix(&["a", "b", "c"], &[&[0.3, 0.1, 0.7], &[0.5, 0.6, 0.2]]);
        let transformed = matrix(
            &["a", "b", "c"],
            &[
                &[0.3f64.exp(), 0.1f64.exp(), 0.7f64.exp()],
                &[5.0 + 3.0 * 0.5, 5.0 + 3.0 * 0.6, 5.0 + 3.0 * 0.2],
            ],
        );
        assert_eq!(average_ranks(&m).unwrap(), average_ranks(&transformed).unwrap());
    }

    #[test]
    fn partial_ties_share_mean_positions() {
        let m = matrix(&["a", "b", "c", "d"], &[&[1.0, 2.0, 2.0, 3.0]]);
        let ranks = average_ranks(&m).unwrap();
        assert_eq!(ranks[0].1, 1.0);
        assert_eq!(ranks[1].1, 2.5);
        assert_eq!(ranks[2].1, 2.5);
        assert_eq!(ranks[3].1, 4.0);
    }
}
