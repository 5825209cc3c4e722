//! Minimum-cost linear assignment.
//!
//! Shortest augmenting path Hungarian method with row/column potentials,
//! `O(n^3)` on the padded square matrix. Ties are resolved by the fixed scan
//! order (rows in index order, lowest column first), so identical inputs
//! always give identical matchings.

use nalgebra::DMatrix;

/// Cost marking a forbidden pairing.
pub const SENTINEL: f64 = 1e9;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Assignment {
    /// `(row, column, cost)` triples sorted by row.
    pub matches: Vec<(usize, usize, f64)>,
    pub unmatched_rows: Vec<usize>,
    pub unmatched_cols: Vec<usize>,
}

impl Assignment {
    pub fn total_cost(&self) -> f64 {
        self.matches.iter().map(|m| m.2).sum()
    }
}

/// Optimal row to column mapping of a rectangular matrix, ignoring any
/// sentinel semantics. `result[r]` is the column of row `r`, or `None` when
/// the matrix has more rows than columns and `r` was left out.
pub fn optimal_columns(cost: &DMatrix<f64>) -> Vec<Option<usize>> {
    let (rows, cols) = cost.shape();
    if rows == 0 || cols == 0 {
        return vec![None; rows];
    }
    let n = rows.max(cols);
    let pad = cost.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0) * 4.0;
    let at = |i: usize, j: usize| {
        if i < rows && j < cols {
            cost[(i, j)]
        } else {
            pad
        }
    };

    // 1-based indexing with a virtual column 0.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    let mut minv = vec![0.0; n + 1];
    let mut used = vec![false; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        minv.iter_mut().for_each(|m| *m = f64::INFINITY);
        used.iter_mut().for_each(|b| *b = false);
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = at(i0 - 1, j - 1) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut out = vec![None; rows];
    for j in 1..=n {
        let i = p[j];
        if i >= 1 && i <= rows && j <= cols {
            out[i - 1] = Some(j - 1);
        }
    }
    out
}

/// Solves the assignment and drops pairings whose cost reached `sentinel`.
pub fn solve(cost: &DMatrix<f64>, sentinel: f64) -> Assignment {
    let (rows, cols) = cost.shape();
    let mapping = optimal_columns(cost);
    let mut col_used = vec![false; cols];
    let mut result = Assignment::default();
    for (r, c) in mapping.into_iter().enumerate() {
        match c {
            Some(c) if cost[(r, c)] < sentinel => {
                col_used[c] = true;
                result.matches.push((r, c, cost[(r, c)]));
            }
            _ => result.unmatched_rows.push(r),
        }
    }
    debug_assert_eq!(result.matches.len() + result.unmatched_rows.len(), rows);
    result.unmatched_cols = (0..cols).filter(|&c| !col_used[c]).collect();
    result
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Exhaustive search over all partial injections of the smaller side.
    pub(crate) fn brute_force(cost: &DMatrix<f64>) -> f64 {
        let (rows, cols) = cost.shape();
        if rows > cols {
            return brute_force(&cost.transpose());
        }
        fn rec(cost: &DMatrix<f64>, row: usize, used: &mut Vec<bool>, acc: f64, best: &mut f64) {
            if row == cost.nrows() {
                *best = best.min(acc);
                return;
            }
            for c in 0..cost.ncols() {
                if !used[c] {
                    used[c] = true;
                    rec(cost, row + 1, used, acc + cost[(row, c)], best);
                    used[c] = false;
                }
            }
        }
        let mut best = f64::INFINITY;
        rec(cost, 0, &mut vec![false; cols], 0.0, &mut best);
        if rows == 0 {
            0.0
        } else {
            best
        }
    }

    fn mapped_total(cost: &DMatrix<f64>) -> f64 {
        optimal_columns(cost)
            .iter()
            .enumerate()
            .filter_map(|(r, c)| c.map(|c| cost[(r, c)]))
            .sum()
    }

    #[test]
    fn identity_on_zero_diagonal() {
        let c = DMatrix::from_fn(3, 3, |i, j| if i == j { 0.0 } else { 1.0 });
        let a = solve(&c, SENTINEL);
        assert_eq!(a.matches, vec![(0, 0, 0.0), (1, 1, 0.0), (2, 2, 0.0)]);
    }

    #[test]
    fn anti_diagonal_two_by_two() {
        let c = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        let a = solve(&c, SENTINEL);
        assert_eq!(a.matches, vec![(0, 1, 2.0), (1, 0, 2.0)]);
        assert_eq!(a.total_cost(), 4.0);
    }

    #[test]
    fn sentinel_matches_are_demoted() {
        let c = DMatrix::from_row_slice(2, 2, &[0.2, SENTINEL, SENTINEL, SENTINEL]);
        let a = solve(&c, SENTINEL);
        assert_eq!(a.matches, vec![(0, 0, 0.2)]);
        assert_eq!(a.unmatched_rows, vec![1]);
        assert_eq!(a.unmatched_cols, vec![1]);
    }

    #[test]
    fn empty_dimensions() {
        let a = solve(&DMatrix::zeros(0, 4), SENTINEL);
        assert_eq!(a.unmatched_cols, vec![0, 1, 2, 3]);
        let b = solve(&DMatrix::zeros(3, 0), SENTINEL);
        assert_eq!(b.unmatched_rows, vec![0, 1, 2]);
    }

    #[test]
    fn rectangular_agrees_with_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..300 {
            let r = rng.random_range(1..6);
            let c = rng.random_range(1..6);
            let m = DMatrix::from_fn(r, c, |_, _| rng.random_range(0..20) as f64);
            assert_eq!(mapped_total(&m), brute_force(&m));
        }
    }

    #[test]
    fn transpose_gives_transposed_matching() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..200 {
            let m = DMatrix::from_fn(4, 6, |_, _| rng.random::<f64>());
            let a = solve(&m, SENTINEL);
            let b = solve(&m.transpose(), SENTINEL);
            let mut flipped: Vec<(usize, usize)> =
                b.matches.iter().map(|&(r, c, _)| (c, r)).collect();
            flipped.sort();
            let direct: Vec<(usize, usize)> = a.matches.iter().map(|&(r, c, _)| (r, c)).collect();
            assert_eq!(direct, flipped);
        }
    }

    proptest! {
        #[test]
        fn row_offset_keeps_match_set(
            seed in any::<u64>(),
            row in 0usize..5,
            offset in -50.0f64..50.0,
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let m = DMatrix::from_fn(5, 5, |_, _| rng.random_range(0..1000) as f64 / 8.0);
            let mut shifted = m.clone();
            shifted.row_mut(row).add_scalar_mut(offset);
            let before = mapped_total(&m);
            let after = mapped_total(&shifted);
            prop_assert!((after - (before + offset)).abs() < 1e-9);
            prop_assert_eq!(brute_force(&m), before);
        }
    }
}
