//! Optimal one-to-one assignment and its thresholded / one-to-many variants.

use crate::error::{Error, Result};
use crate::matrix::{AffinityMatrix, Matrix};

/// Cost given to padding cells when squaring a rectangular cost matrix.
pub const PAD_COST: f64 = 1e6;

/// Result of an assignment: matched `(row, col)` pairs plus the unmatched indices.
///
/// All three lists are sorted ascending.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Assignment {
    pub matched: Vec<(usize, usize)>,
    pub unmatched_rows: Vec<usize>,
    pub unmatched_cols: Vec<usize>,
}

impl Assignment {
    fn from_matches(rows: usize, cols: usize, mut matched: Vec<(usize, usize)>) -> Self {
        matched.sort_unstable();
        let mut row_used = vec![false; rows];
        let mut col_used = vec![false; cols];
        for &(r, c) in &matched {
            row_used[r] = true;
            col_used[c] = true;
        }
        Self {
            matched,
            unmatched_rows: (0..rows).filter(|&r| !row_used[r]).collect(),
            unmatched_cols: (0..cols).filter(|&c| !col_used[c]).collect(),
        }
    }

    /// Sum of `cost` over the matched cells.
    pub fn total(&self, cost: &Matrix) -> f64 {
        self.matched.iter().map(|&rc| cost[rc]).sum()
    }

    /// Binary `H` view of the assignment.
    pub fn to_matrix(&self, rows: usize, cols: usize) -> Matrix {
        let mut h = Matrix::zeros(rows, cols);
        for &rc in &self.matched {
            h[rc] = 1.0;
        }
        h
    }
}

/// Minimum-cost assignment (Kuhn–Munkres with potentials, `O(n³)`).
///
/// Rectangular inputs are padded to square with [`PAD_COST`]; pairs landing on padding are
/// reported as unmatched. Among equal reductions the lowest column index wins, so results are
/// deterministic.
pub fn hungarian(cost: &Matrix) -> Result<Assignment> {
    let (rows, cols) = cost.shape();
    for i in 0..rows {
        for j in 0..cols {
            if !cost[(i, j)].is_finite() {
                return Err(Error::NonFinite { row: i, col: j });
            }
        }
    }
    let n = rows.max(cols);
    if n == 0 || rows == 0 || cols == 0 {
        return Ok(Assignment::from_matches(rows, cols, Vec::new()));
    }
    let at = |i: usize, j: usize| {
        if i < rows && j < cols {
            cost[(i, j)]
        } else {
            PAD_COST
        }
    };

    // 1-based arrays; index 0 is the virtual source column.
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; n + 1];
    let mut col_owner = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        col_owner[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = col_owner[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
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
                    u[col_owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if col_owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            col_owner[j0] = col_owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let matched = (1..=n)
        .filter_map(|j| {
            let i = col_owner[j];
            (i >= 1 && i <= rows && j <= cols).then(|| (i - 1, j - 1))
        })
        .collect();
    Ok(Assignment::from_matches(rows, cols, matched))
}

/// Optimal one-to-one matching on `1 − similarity`, keeping only pairs with similarity `> δ`.
pub fn assign_with_threshold(similarity: &AffinityMatrix, threshold: f64) -> Assignment {
    let cost = similarity.map(|s| 1.0 - s);
    // Similarities are finite by construction; a NaN would be a scorer bug.
    let full = hungarian(&cost).expect("similarity matrix must be finite");
    let kept = full
        .matched
        .into_iter()
        .filter(|&rc| similarity[rc] > threshold)
        .collect();
    Assignment::from_matches(similarity.rows(), similarity.cols(), kept)
}

/// Rows (vision) independently pick their best column (radar) when it beats `δ`.
///
/// A column may be claimed by several rows. With `cap = Some(k)` a column keeps at most its
/// `k` most similar rows. Ties go to the lowest index. The result is sorted by row.
pub fn one_to_many_assign(
    similarity: &AffinityMatrix,
    threshold: f64,
    cap: Option<usize>,
) -> Vec<(usize, usize)> {
    let (rows, cols) = similarity.shape();
    let mut picks: Vec<(usize, usize)> = Vec::new();
    if cols == 0 {
        return picks;
    }
    for i in 0..rows {
        let row = similarity.row(i);
        let mut best = 0;
        for j in 1..cols {
            if row[j] > row[best] {
                best = j;
            }
        }
        if row[best] > threshold {
            picks.push((i, best));
        }
    }
    if let Some(cap) = cap {
        let mut kept = Vec::with_capacity(picks.len());
        for j in 0..cols {
            let mut claimants: Vec<(usize, usize)> =
                picks.iter().copied().filter(|&(_, c)| c == j).collect();
            claimants.sort_by(|a, b| similarity[*b].total_cmp(&similarity[*a]).then(a.0.cmp(&b.0)));
            kept.extend(claimants.into_iter().take(cap));
        }
        kept.sort_unstable();
        picks = kept;
    }
    picks
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn zero_diagonal() {
        let a = hungarian(&Matrix::from_rows(&[[0.0, 9.0], [9.0, 0.0]])).unwrap();
        assert_eq!(a.matched, vec![(0, 0), (1, 1)]);
        assert_eq!(a.total(&Matrix::from_rows(&[[0.0, 9.0], [9.0, 0.0]])), 0.0);
    }

    #[test]
    fn small_optimum() {
        let cost = Matrix::from_rows(&[[1.0, 2.0], [2.0, 1.0]]);
        let a = hungarian(&cost).unwrap();
        assert_eq!(a.matched, vec![(0, 0), (1, 1)]);
        assert_eq!(a.total(&cost), 2.0);
    }

    #[test]
    fn rectangular_leaves_unmatched() {
        let cost = Matrix::from_rows(&[[5.0], [1.0], [3.0]]);
        let a = hungarian(&cost).unwrap();
        assert_eq!(a.matched, vec![(1, 0)]);
        assert_eq!(a.unmatched_rows, vec![0, 2]);
        assert!(a.unmatched_cols.is_empty());

        let cost = Matrix::from_rows(&[[4.0, 2.0, 8.0]]);
        let a = hungarian(&cost).unwrap();
        assert_eq!(a.matched, vec![(0, 1)]);
        assert_eq!(a.unmatched_cols, vec![0, 2]);
    }

    #[test]
    fn empty_and_nonfinite() {
        let a = hungarian(&Matrix::zeros(0, 3)).unwrap();
        assert_eq!(a.unmatched_cols, vec![0, 1, 2]);
        let bad = Matrix::from_rows(&[[1.0, f64::NAN]]);
        assert!(matches!(hungarian(&bad), Err(Error::NonFinite { row: 0, col: 1 })));
        let inf = Matrix::from_rows(&[[f64::INFINITY]]);
        assert!(hungarian(&inf).is_err());
    }

    #[test]
    fn threshold_examples() {
        let a = assign_with_threshold(&Matrix::from_rows(&[[0.9]]), 0.5);
        assert_eq!(a.matched, vec![(0, 0)]);
        let a = assign_with_threshold(&Matrix::from_rows(&[[0.4]]), 0.5);
        assert!(a.matched.is_empty());
        assert_eq!((a.unmatched_rows, a.unmatched_cols), (vec![0], vec![0]));
        let a = assign_with_threshold(&Matrix::from_rows(&[[0.9, 0.8], [0.85, 0.2]]), 0.5);
        assert_eq!(a.matched, vec![(0, 1), (1, 0)]);
        // Exactly at threshold is not a match.
        let a = assign_with_threshold(&Matrix::from_rows(&[[0.5]]), 0.5);
        assert!(a.matched.is_empty());
    }

    #[test]
    fn one_to_many_examples() {
        let s = Matrix::from_rows(&[[0.8], [0.7]]);
        assert_eq!(one_to_many_assign(&s, 0.5, None), vec![(0, 0), (1, 0)]);
        let s = Matrix::from_rows(&[[0.8], [0.3]]);
        assert_eq!(one_to_many_assign(&s, 0.5, None), vec![(0, 0)]);
        let s = Matrix::from_rows(&[[0.7, 0.7]]);
        assert_eq!(one_to_many_assign(&s, 0.5, None), vec![(0, 0)]);
    }

    #[test]
    fn one_to_many_cap_keeps_best_rows() {
        let s = Matrix::from_rows(&[[0.7], [0.9], [0.8]]);
        assert_eq!(one_to_many_assign(&s, 0.5, Some(2)), vec![(1, 0), (2, 0)]);
        assert_eq!(one_to_many_assign(&s, 0.5, Some(1)), vec![(1, 0)]);
    }

    fn brute_force_min(cost: &Matrix) -> f64 {
        let (m, n) = cost.shape();
        let (small, large, transposed) = if m <= n { (m, n, false) } else { (n, m, true) };
        let mut best = f64::INFINITY;
        let mut perm: Vec<usize> = (0..large).collect();
        permute(&mut perm, 0, &mut |p| {
            let total: f64 = (0..small)
                .map(|i| if transposed { cost[(p[i], i)] } else { cost[(i, p[i])] })
                .sum();
            best = best.min(total);
        });
        best
    }

    fn permute(p: &mut Vec<usize>, k: usize, f: &mut impl FnMut(&[usize])) {
        if k == p.len() {
            f(p);
            return;
        }
        for i in k..p.len() {
            p.swap(k, i);
            permute(p, k + 1, f);
            p.swap(k, i);
        }
    }

    fn matrix_strategy() -> impl Strategy<Value = Matrix> {
        (1usize..=5, 1usize..=5).prop_flat_map(|(m, n)| {
            proptest::collection::vec(0i32..20, m * n)
                .prop_map(move |v| Matrix::from_vec(m, n, v.into_iter().map(f64::from).collect()).unwrap())
        })
    }

    proptest! {
        #[test]
        fn matches_brute_force(cost in matrix_strategy()) {
            let a = hungarian(&cost).unwrap();
            prop_assert_eq!(a.matched.len(), cost.rows().min(cost.cols()));
            prop_assert_eq!(a.total(&cost), brute_force_min(&cost));
        }

        #[test]
        fn row_and_column_offsets_do_not_change_argmin(
            cost in matrix_strategy(), shift in -50i32..50, pick in 0usize..5, by_row in any::<bool>()
        ) {
            let (m, n) = cost.shape();
            let mut shifted = cost.clone();
            let limit = if by_row { m } else { n };
            let line = pick % limit;
            for k in 0..if by_row { n } else { m } {
                let rc = if by_row { (line, k) } else { (k, line) };
                shifted[rc] += f64::from(shift);
            }
            let a = hungarian(&cost).unwrap();
            let b = hungarian(&shifted).unwrap();
            // The shifted line is always matched when it is on the smaller side.
            let fully_covered = if by_row { m <= n } else { n <= m };
            prop_assume!(fully_covered);
            prop_assert_eq!(b.total(&shifted), a.total(&cost) + f64::from(shift));
            prop_assert_eq!(b.total(&cost), a.total(&cost));
        }

        #[test]
        fn thresholded_pairs_exceed_threshold(
            sims in proptest::collection::vec(0.0f64..1.0, 12), delta in 0.0f64..1.0
        ) {
            let s = Matrix::from_vec(3, 4, sims).unwrap();
            let a = assign_with_threshold(&s, delta);
            prop_assert!(a.matched.iter().all(|&rc| s[rc] > delta));
        }

        #[test]
        fn one_to_many_is_rowwise_argmax(
            sims in proptest::collection::vec(0.0f64..1.0, 6), delta in 0.0f64..1.0
        ) {
            let s = Matrix::from_vec(3, 2, sims).unwrap();
            let got = one_to_many_assign(&s, delta, None);
            let mut expected = Vec::new();
            for i in 0..3 {
                let best = if s[(i, 1)] > s[(i, 0)] { 1 } else { 0 };
                if s[(i, best)] > delta {
                    expected.push((i, best));
                }
            }
            prop_assert_eq!(got, expected);
        }
    }
}
