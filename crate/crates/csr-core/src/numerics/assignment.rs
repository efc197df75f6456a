//! Maximal linear score assignment (Hungarian match).

use super::NumericsError;

/// Rectangular matrix of match scores, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl ScoreMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, NumericsError> {
        if data.len() != rows * cols {
            return Err(NumericsError::DimMismatch {
                left: rows * cols,
                right: data.len(),
            });
        }
        Ok(ScoreMatrix { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, NumericsError> {
        let ncols = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != ncols) {
            return Err(NumericsError::DimMismatch {
                left: ncols,
                right: rows.iter().map(|r| r.len()).max().unwrap_or(0),
            });
        }
        Ok(ScoreMatrix {
            rows: rows.len(),
            cols: ncols,
            data: rows.iter().flatten().copied().collect(),
        })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        ScoreMatrix { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }
}

/// One-to-one partial matching of rows to columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    /// Matched (row, col) pairs, sorted by row index.
    pub pairs: Vec<(usize, usize)>,
    pub unmatched_rows: Vec<usize>,
    pub unmatched_cols: Vec<usize>,
}

impl Assignment {
    pub fn total_score(&self, scores: &ScoreMatrix) -> f64 {
        self.pairs.iter().map(|&(i, j)| scores.get(i, j)).sum()
    }
}

/// Finds a matching of size `min(rows, cols)` maximizing total score.
///
/// Runs the O(n³) Hungarian algorithm with row/column potentials on the
/// negated matrix. Output is deterministic for a given input.
pub fn max_assignment(scores: &ScoreMatrix) -> Result<Assignment, NumericsError> {
    if scores.data.iter().any(|x| !x.is_finite()) {
        return Err(NumericsError::NonFinite);
    }
    if scores.rows == 0 || scores.cols == 0 {
        return Ok(Assignment {
            pairs: vec![],
            unmatched_rows: (0..scores.rows).collect(),
            unmatched_cols: (0..scores.cols).collect(),
        });
    }

    // The potential-based solver wants rows ≤ cols; transpose if needed.
    let transposed = scores.rows > scores.cols;
    let (n, m) = if transposed {
        (scores.cols, scores.rows)
    } else {
        (scores.rows, scores.cols)
    };
    let cost = |i: usize, j: usize| -> f64 {
        if transposed {
            -scores.get(j, i)
        } else {
            -scores.get(i, j)
        }
    };

    // Hungarian algorithm with potentials, 1-indexed internally.
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; m + 1];
    let mut p = vec![0usize; m + 1]; // p[j] = row matched to column j
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=m {
                if !used[j] {
                    let cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=m {
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

    let mut pairs: Vec<(usize, usize)> = Vec::with_capacity(n);
    for j in 1..=m {
        if p[j] != 0 {
            let (row, col) = if transposed { (j - 1, p[j] - 1) } else { (p[j] - 1, j - 1) };
            pairs.push((row, col));
        }
    }
    pairs.sort_unstable();

    let matched_rows: std::collections::HashSet<usize> = pairs.iter().map(|&(r, _)| r).collect();
    let matched_cols: std::collections::HashSet<usize> = pairs.iter().map(|&(_, c)| c).collect();
    Ok(Assignment {
        unmatched_rows: (0..scores.rows).filter(|r| !matched_rows.contains(r)).collect(),
        unmatched_cols: (0..scores.cols).filter(|c| !matched_cols.contains(c)).collect(),
        pairs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Exhaustive oracle: best total over all injections of the smaller
    /// index set into the larger one.
    pub(crate) fn brute_force_best(scores: &ScoreMatrix) -> f64 {
        fn recurse(
            scores: &ScoreMatrix,
            row: usize,
            used_cols: &mut Vec<bool>,
            remaining: usize,
        ) -> f64 {
            if remaining == 0 {
                return 0.0;
            }
            if row >= scores.rows() {
                return f64::NEG_INFINITY;
            }
            let mut best = f64::NEG_INFINITY;
            // Skip this row only if enough rows remain to fill the matching.
            if scores.rows() - row - 1 >= remaining {
                best = recurse(scores, row + 1, used_cols, remaining);
            }
            for j in 0..scores.cols() {
                if !used_cols[j] {
                    used_cols[j] = true;
                    let sub = recurse(scores, row + 1, used_cols, remaining - 1);
                    used_cols[j] = false;
                    best = best.max(scores.get(row, j) + sub);
                }
            }
            best
        }
        let k = scores.rows().min(scores.cols());
        recurse(scores, 0, &mut vec![false; scores.cols()], k)
    }

    #[test]
    fn identity_matrix() {
        let m = ScoreMatrix::from_fn(3, 3, |i, j| if i == j { 1.0 } else { 0.0 });
        let a = max_assignment(&m).unwrap();
        assert_eq!(a.pairs, vec![(0, 0), (1, 1), (2, 2)]);
        assert_eq!(a.total_score(&m), 3.0);
        assert!(a.unmatched_rows.is_empty() && a.unmatched_cols.is_empty());
    }

    #[test]
    fn anti_diagonal() {
        let m = ScoreMatrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        let a = max_assignment(&m).unwrap();
        assert_eq!(a.pairs, vec![(0, 1), (1, 0)]);
        assert_eq!(a.total_score(&m), 2.0);
    }

    #[test]
    fn rejects_non_finite() {
        let m = ScoreMatrix::from_rows(&[vec![0.0, f64::NAN]]).unwrap();
        assert!(max_assignment(&m).is_err());
    }

    #[test]
    fn empty_dimensions() {
        let m = ScoreMatrix::new(0, 3, vec![]).unwrap();
        let a = max_assignment(&m).unwrap();
        assert!(a.pairs.is_empty());
        assert_eq!(a.unmatched_cols, vec![0, 1, 2]);
    }

    #[test]
    fn matches_brute_force_on_seeded_matrices() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for trial in 0..200 {
            let rows = rng.gen_range(1..=6);
            let cols = rng.gen_range(1..=6);
            let m = ScoreMatrix::from_fn(rows, cols, |_, _| rng.gen_range(-1.0..1.0));
            let a = max_assignment(&m).unwrap();
            assert_eq!(a.pairs.len(), rows.min(cols));
            let got = a.total_score(&m);
            let want = brute_force_best(&m);
            assert!(
                (got - want).abs() < 1e-9,
                "trial {trial} ({rows}x{cols}): {got} vs brute force {want}"
            );
        }
    }

    #[test]
    fn rectangular_examples_match_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for &(rows, cols) in &[(4, 4), (3, 5), (5, 3)] {
            let m = ScoreMatrix::from_fn(rows, cols, |_, _| rng.gen_range(-1.0..1.0));
            let a = max_assignment(&m).unwrap();
            assert!((a.total_score(&m) - brute_force_best(&m)).abs() < 1e-9);
        }
    }

    #[test]
    fn invariant_under_constant_shift() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..50 {
            let rows = rng.gen_range(1..=5);
            let cols = rng.gen_range(1..=5);
            let base = ScoreMatrix::from_fn(rows, cols, |_, _| rng.gen_range(-1.0..1.0));
            let shift = rng.gen_range(-10.0..10.0);
            let shifted = ScoreMatrix::from_fn(rows, cols, |i, j| base.get(i, j) + shift);
            // Only square matrices have shift-invariant optima in general;
            // for rectangular ones the matching size is fixed at min(r,c),
            // so a uniform shift adds the same constant to every candidate.
            let a = max_assignment(&base).unwrap();
            let b = max_assignment(&shifted).unwrap();
            let sa = a.total_score(&shifted);
            let sb = b.total_score(&shifted);
            assert!((sa - sb).abs() < 1e-9);
        }
    }
}
