//! Rank-based significance testing: a chi-square rank-sum test across
//! methods, pairwise z-tests against the best-ranked method, and step-up
//! multiplicity adjustment. Tail probabilities come from a self-contained
//! regularized incomplete gamma implementation (series expansion on one
//! side of the crossover, continued fraction on the other).

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::eval::{average_ranks, ErrorMatrix};

/// Natural log of the gamma function (Lanczos approximation, g = 7).
fn ln_gamma(z: f64) -> f64 {
    const COEFFICIENTS: [f64; 8] = [
        676.5203681218851,
        -1259.1392167224028,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507343278686905,
        -0.13857109526572012,
        9.984_369_578_019_572e-6,
        1.5056327351493116e-7,
    ];
    if z < 0.5 {
        // Reflection: gamma(z) * gamma(1 - z) = pi / sin(pi z).
        return std::f64::consts::PI.ln()
            - (std::f64::consts::PI * z).sin().ln()
            - ln_gamma(1.0 - z);
    }
    let z = z - 1.0;
    let mut x = 0.99999999999980993;
    for (i, &c) in COEFFICIENTS.iter().enumerate() {
        x += c / (z + i as f64 + 1.0);
    }
    let t = z + 7.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (z + 0.5) * t.ln() - t + x.ln()
}

/// Regularized upper incomplete gamma Q(a, x) with absolute error <= 1e-10.
pub(crate) fn reg_gamma_upper(a: f64, x: f64) -> f64 {
    assert!(a > 0.0 && x >= 0.0, "Q(a, x) needs a > 0, x >= 0");
    if x == 0.0 {
        return 1.0;
    }
    if x < a + 1.0 {
        1.0 - lower_series(a, x)
    } else {
        upper_continued_fraction(a, x)
    }
}

/// P(a, x) by series: x^a e^{-x} / Gamma(a) * sum x^n / (a (a+1) ... (a+n)).
fn lower_series(a: f64, x: f64) -> f64 {
    let mut ap = a;
    let mut term = 1.0 / a;
    let mut sum = term;
    for _ in 0..500 {
        ap += 1.0;
        term *= x / ap;
        sum += term;
        if term.abs() < sum.abs() * 1e-16 {
            break;
        }
    }
    sum * (a * x.ln() - x - ln_gamma(a)).exp()
}

/// Q(a, x) by modified Lentz continued fraction.
fn upper_continued_fraction(a: f64, x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / TINY;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..500 {
        let an = -(i as f64) * (i as f64 - a);
        b += 2.0;
        d = an * d + b;
        if d.abs() < TINY {
            d = TINY;
        }
        c = b + an / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < 1e-16 {
            break;
        }
    }
    (a * x.ln() - x - ln_gamma(a)).exp() * h
}

/// Upper-tail probability of a chi-square variate: Q(dof/2, value/2).
pub fn chi_square_p(value: f64, dof: usize) -> Result<f64> {
    if dof < 1 {
        return Err(Error::Domain("chi-square needs at least one degree of freedom".into()));
    }
    if value < 0.0 {
        return Err(Error::Domain(format!("chi-square statistic {value} is negative")));
    }
    Ok(reg_gamma_upper(dof as f64 / 2.0, value / 2.0))
}

/// Two-sided standard-normal tail probability of `z`:
/// erfc(|z| / sqrt(2)) = Q(1/2, z^2 / 2).
pub fn normal_two_sided_p(z: f64) -> f64 {
    if z == 0.0 {
        return 1.0;
    }
    reg_gamma_upper(0.5, z * z / 2.0)
}

/// Chi-square rank-sum test over an error matrix: with rank sums `R_j` over
/// `N` rows and `k` methods, the statistic is
/// `12 / (N k (k+1)) * sum R_j^2 - 3 N (k+1)`, referred to a chi-square
/// distribution with `k - 1` degrees of freedom.
pub fn friedman_test(matrix: &ErrorMatrix) -> Result<(f64, f64)> {
    let n = matrix.n_rows();
    let k = matrix.n_methods();
    if n < 2 || k < 2 {
        return Err(Error::Domain(format!(
            "the rank-sum test needs at least 2 series and 2 methods, got {n} and {k}"
        )));
    }
    let ranks = average_ranks(matrix)?;
    let sum_squares: f64 = ranks
        .iter()
        .map(|(_, avg)| {
            let rank_sum = avg * n as f64;
            rank_sum * rank_sum
        })
        .sum();
    let statistic = (12.0 / (n as f64 * k as f64 * (k + 1) as f64) * sum_squares
        - 3.0 * n as f64 * (k + 1) as f64)
        .max(0.0);
    let p = chi_square_p(statistic, k - 1)?;
    Ok((statistic, p))
}

/// Pairwise z-statistic for an average-rank gap under `N` rows, `k` methods.
pub(crate) fn posthoc_z(rank_gap: f64, n: usize, k: usize) -> f64 {
    rank_gap / (k as f64 * (k + 1) as f64 / (6.0 * n as f64)).sqrt()
}

/// Compares every method against the control (the best average rank; first
/// in column order on ties) and returns the control plus two-sided raw
/// p-values for the others.
pub fn posthoc_pvalues(
    avg_ranks: &[(String, f64)],
    n: usize,
    k: usize,
) -> Result<(String, BTreeMap<String, f64>)> {
    if avg_ranks.len() != k || k < 2 {
        return Err(Error::Domain(format!(
            "expected {k} >= 2 average ranks, got {}",
            avg_ranks.len()
        )));
    }
    if n < 1 {
        return Err(Error::Domain("post-hoc comparison needs at least one row".into()));
    }
    let (control, control_rank) = avg_ranks
        .iter()
        .fold(None::<(&String, f64)>, |best, (name, rank)| match best {
            Some((_, r)) if *rank >= r => best,
            _ => Some((name, *rank)),
        })
        .expect("at least two methods");
    let mut pvalues = BTreeMap::new();
    for (name, rank) in avg_ranks {
        if name == control {
            continue;
        }
        let z = posthoc_z(rank - control_rank, n, k);
        pvalues.insert(name.clone(), normal_two_sided_p(z));
    }
    Ok((control.clone(), pvalues))
}

/// Step-up multiplicity adjustment: with sorted raw values
/// `p_(1) <= ... <= p_(K)`, the i-th adjusted value is
/// `min over j >= i of min(1, (K - j + 1) * p_(j))`.
pub fn hochberg_adjust(pvalues: &BTreeMap<String, f64>) -> Result<BTreeMap<String, f64>> {
    for (name, &p) in pvalues {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::Domain(format!("p-value {p} for {name:?} is outside [0, 1]")));
        }
    }
    let mut sorted: Vec<(&String, f64)> = pvalues.iter().map(|(n, &p)| (n, p)).collect();
    sorted.sort_by(|a, b| a.1.partial_cmp(&b.1).expect("validated above"));
    let count = sorted.len();
    let mut adjusted = BTreeMap::new();
    let mut suffix_min = f64::INFINITY;
    for (j, (name, p)) in sorted.into_iter().enumerate().rev() {
        suffix_min = suffix_min.min(((count - j) as f64 * p).min(1.0));
        adjusted.insert(name.clone(), suffix_min);
    }
    Ok(adjusted)
}

/// Outcome of the full testing pipeline on one error matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct StatReport {
    pub friedman_statistic: f64,
    pub friedman_p: f64,
    /// Method with the best (lowest) average rank.
    pub control: String,
    /// Step-up-adjusted p-values of every non-control method.
    pub adjusted_p: BTreeMap<String, f64>,
    /// Average rank per method, in matrix column order.
    pub average_ranks: Vec<(String, f64)>,
}

/// Runs the rank-sum test, the pairwise comparisons against the best-ranked
/// method, and the multiplicity adjustment.
pub fn stat_report(matrix: &ErrorMatrix) -> Result<StatReport> {
    let (friedman_statistic, friedman_p) = friedman_test(matrix)?;
    let ranks = average_ranks(matrix)?;
    let (control, raw) = posthoc_pvalues(&ranks, matrix.n_rows(), matrix.n_methods())?;
    let adjusted_p = hochberg_adjust(&raw)?;
    Ok(StatReport {
        friedman_statistic,
        friedman_p,
        control,
        adjusted_p,
        average_ranks: ranks,
    })
}
