//! Dynamic time warping with squared pointwise costs.

use crate::error::{Error, Result};

/// Monotone alignment between two sequences: starts at `(0, 0)`, ends at
/// `(len_a - 1, len_b - 1)`, and advances by `(1, 1)`, `(1, 0)`, or `(0, 1)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WarpPath {
    pub pairs: Vec<(usize, usize)>,
}

/// Minimal cumulative squared difference over all warping paths, plus one
/// optimal path. Ties during backtracking prefer the diagonal step, then the
/// step that advances only `a`.
pub fn dtw_distance(a: &[f64], b: &[f64]) -> Result<(f64, WarpPath)> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Domain("cannot warp an empty sequence".into()));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(Error::Domain("cannot warp non-finite values".into()));
    }
    let (la, lb) = (a.len(), b.len());
    let width = lb + 1;
    let mut acc = vec![f64::INFINITY; (la + 1) * width];
    acc[0] = 0.0;
    for i in 1..=la {
        for j in 1..=lb {
            let d = (a[i - 1] - b[j - 1]).powi(2);
            let best = acc[(i - 1) * width + j - 1]
                .min(acc[(i - 1) * width + j])
                .min(acc[i * width + j - 1]);
            acc[i * width + j] = d + best;
        }
    }
    let mut pairs = Vec::with_capacity(la + lb);
    let (mut i, mut j) = (la, lb);
    while i > 1 || j > 1 {
        pairs.push((i - 1, j - 1));
        let (ni, nj) = if i == 1 {
            (i, j - 1)
        } else if j == 1 {
            (i - 1, j)
        } else {
            let diag = acc[(i - 1) * width + j - 1];
            let up = acc[(i - 1) * width + j];
            let left = acc[i * width + j - 1];
            let best = diag.min(up).min(left);
            if diag == best {
                (i - 1, j - 1)
            } else if up == best {
                (i - 1, j)
            } else {
                (i, j - 1)
            }
        };
        i = ni;
        j = nj;
    }
    pairs.push((0, 0));
    pairs.reverse();
    Ok((acc[la * width + lb], WarpPath { pairs }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    #[test]
    fn hand_checked_costs() {
        let (cost, path) = dtw_distance(&[0.0, 0.0], &[1.0, 1.0]).unwrap();
        assert_eq!(cost, 2.0);
        assert_eq!(path.pairs, vec![(0, 0), (1, 1)]);

        let (cost, path) = dtw_distance(&[0.0], &[1.0, 1.0]).unwrap();
        assert_eq!(cost, 2.0);
        assert_eq!(path.pairs, vec![(0, 0), (0, 1)]);

        let (cost, _) = dtw_distance(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(cost, 0.0);
    }

    #[test]
    fn self_distance_is_zero_with_diagonal_path() {
        let mut rng = StdRng::seed_from_u64(5);
        let x: Vec<f64> = (0..20).map(|_| rng.random_range(-4.0..4.0)).collect();
        let (cost, path) = dtw_distance(&x, &x).unwrap();
        assert_eq!(cost, 0.0);
        let diagonal: Vec<(usize, usize)> = (0..20).map(|i| (i, i)).collect();
        assert_eq!(path.pairs, diagonal);
    }

    #[test]
    fn cost_is_symmetric_and_bounded_by_lockstep() {
        let mut rng = StdRng::seed_from_u64(6);
        for _ in 0..200 {
            let len = rng.random_range(1..15);
            let a: Vec<f64> = (0..len).map(|_| rng.random_range(-3.0..3.0)).collect();
            let b: Vec<f64> = (0..len).map(|_| rng.random_range(-3.0..3.0)).collect();
            let (dab, path) = dtw_distance(&a, &b).unwrap();
            let (dba, _) = dtw_distance(&b, &a).unwrap();
            assert!((dab - dba).abs() < 1e-12);
            let lockstep: f64 = a.iter().zip(&b).map(|(x, y)| (x - y).powi(2)).sum();
            assert!(dab <= lockstep + 1e-12);
            assert_eq!(*path.pairs.first().unwrap(), (0, 0));
            assert_eq!(*path.pairs.last().unwrap(), (len - 1, len - 1));
            for w in path.pairs.windows(2) {
                let (di, dj) = (w[1].0 - w[0].0, w[1].1 - w[0].1);
                assert!(di <= 1 && dj <= 1 && di + dj >= 1);
            }
        }
    }

    #[test]
    fn empty_input_is_rejected() {
        assert!(dtw_distance(&[], &[1.0]).is_err());
        assert!(dtw_distance(&[1.0], &[f64::NAN]).is_err());
    }
}
