//! Exact square assignment.
//!
//! `solve_assignment` runs the shortest-augmenting-path Hungarian method
//! (O(n³)) and then moves, inside the set of optimal assignments, to the
//! lexicographically smallest permutation. Optimal assignments are exactly
//! the perfect matchings of the tight subgraph of any optimal dual, so the
//! tie-break is a greedy walk over that subgraph with alternating-path
//! repairs.

use itertools::Itertools;
use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::OtError;
use crate::Real;

/// Largest `n` accepted by [`brute_force_assignment`].
pub const BRUTE_FORCE_MAX: usize = 9;

/// A permutation `source index -> target index` with its total cost.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct Assignment<T> {
    pub perm: Vec<usize>,
    pub objective: T,
}

impl<T: Real> Assignment<T> {
    fn from_perm(cost: &Array2<T>, perm: Vec<usize>) -> Self {
        let objective = objective(cost, &perm);
        Self { perm, objective }
    }
}

/// Sum of `cost[i, perm[i]]` in row order.
pub(crate) fn objective<T: Real>(cost: &Array2<T>, perm: &[usize]) -> T {
    perm.iter()
        .enumerate()
        .fold(T::zero(), |acc, (i, &j)| acc + cost[[i, j]])
}

/// Slack under which two assignment values count as equal.
pub fn tie_tolerance<T: Real>(cost: &Array2<T>) -> T {
    let n = cost.nrows().max(1);
    let scale = cost.iter().fold(T::zero(), |m, v| m.max(v.abs()));
    T::epsilon() * T::c(16.0 * n as f64) * (T::one() + scale)
}

fn validate<T: Real>(cost: &Array2<T>) -> Result<usize, OtError> {
    let (rows, cols) = cost.dim();
    if rows != cols {
        return Err(OtError::NotSquare { rows, cols });
    }
    if let Some(((row, col), _)) = cost.indexed_iter().find(|(_, v)| !v.is_finite()) {
        return Err(OtError::NonFinite { row, col });
    }
    Ok(rows)
}

/// Globally optimal permutation; among optima, the lexicographically smallest.
pub fn solve_assignment<T: Real>(cost: &Array2<T>) -> Result<Assignment<T>, OtError> {
    let n = validate(cost)?;
    if n == 0 {
        return Ok(Assignment {
            perm: Vec::new(),
            objective: T::zero(),
        });
    }
    let (mut row_to_col, u, v) = hungarian(cost);
    let tol = tie_tolerance(cost);
    let tight: Vec<Vec<usize>> = (0..n)
        .map(|i| {
            (0..n)
                .filter(|&j| cost[[i, j]] - u[i] - v[j] <= tol || j == row_to_col[i])
                .collect()
        })
        .collect();
    lexicographic_matching(&tight, &mut row_to_col);
    Ok(Assignment::from_perm(cost, row_to_col))
}

/// Returns the row-to-column matching and the dual potentials, with
/// `cost[i][j] - u[i] - v[j] >= 0` up to rounding and equality on the matching.
fn hungarian<T: Real>(cost: &Array2<T>) -> (Vec<usize>, Vec<T>, Vec<T>) {
    let n = cost.nrows();
    let inf = T::infinity();
    // 1-based with a sentinel column 0.
    let mut u = vec![T::zero(); n + 1];
    let mut v = vec![T::zero(); n + 1];
    let mut owner = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];

    for i in 1..=n {
        owner[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = inf;
            let mut j1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost[[i0 - 1, j - 1]] - u[i0] - v[j];
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
                    u[owner[j]] = u[owner[j]] + delta;
                    v[j] = v[j] - delta;
                } else {
                    minv[j] = minv[j] - delta;
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut row_to_col = vec![0usize; n];
    for j in 1..=n {
        row_to_col[owner[j] - 1] = j - 1;
    }
    (row_to_col, u[1..].to_vec(), v[1..].to_vec())
}

/// Rewrites `row_to_col` (a perfect matching of `tight`) into the
/// lexicographically smallest perfect matching of `tight`.
fn lexicographic_matching(tight: &[Vec<usize>], row_to_col: &mut [usize]) {
    let n = row_to_col.len();
    let mut col_to_row = vec![0usize; n];
    for (i, &j) in row_to_col.iter().enumerate() {
        col_to_row[j] = i;
    }
    let mut fixed_col = vec![false; n];
    for i in 0..n {
        for &j in &tight[i] {
            if j >= row_to_col[i] {
                break;
            }
            if fixed_col[j] {
                continue;
            }
            // Row r gives up j; an alternating path from r must end at the
            // column i releases.
            let released = row_to_col[i];
            let r = col_to_row[j];
            let mut visited = vec![false; n];
            visited[j] = true;
            let mut search = Rematch {
                tight,
                fixed_col: &fixed_col,
                released,
                row_to_col: &mut *row_to_col,
                col_to_row: &mut col_to_row,
                visited: &mut visited,
            };
            if search.augment(r) {
                row_to_col[i] = j;
                col_to_row[j] = i;
                break;
            }
        }
        fixed_col[row_to_col[i]] = true;
    }
}

struct Rematch<'a> {
    tight: &'a [Vec<usize>],
    fixed_col: &'a [bool],
    released: usize,
    row_to_col: &'a mut [usize],
    col_to_row: &'a mut [usize],
    visited: &'a mut [bool],
}

impl Rematch<'_> {
    fn augment(&mut self, r: usize) -> bool {
        for k in 0..self.tight[r].len() {
            let c = self.tight[r][k];
            if self.fixed_col[c] || self.visited[c] {
                continue;
            }
            self.visited[c] = true;
            if c == self.released || self.augment(self.col_to_row[c]) {
                self.row_to_col[r] = c;
                self.col_to_row[c] = r;
                return true;
            }
        }
        false
    }
}

/// Exhaustive minimum over all `n!` permutations, visited in lexicographic
/// order; a later permutation replaces the incumbent only when it is better
/// by more than [`tie_tolerance`].
pub fn brute_force_assignment<T: Real>(cost: &Array2<T>) -> Result<Assignment<T>, OtError> {
    let n = validate(cost)?;
    if n > BRUTE_FORCE_MAX {
        return Err(OtError::TooLarge {
            n,
            max: BRUTE_FORCE_MAX,
        });
    }
    let tol = tie_tolerance(cost);
    let mut best: Option<(Vec<usize>, T)> = None;
    for perm in (0..n).permutations(n) {
        let value = objective(cost, &perm);
        match &best {
            Some((_, b)) if value >= *b - tol => {}
            _ => best = Some((perm, value)),
        }
    }
    let (perm, _) = best.unwrap_or_default();
    Ok(Assignment::from_perm(cost, perm))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::Rng;

    #[test]
    fn identity_on_zero_diagonal() {
        let c = array![[0.0, 1.0, 2.0], [1.0, 0.0, 1.0], [2.0, 1.0, 0.0]];
        let a = solve_assignment(&c).unwrap();
        assert_eq!(a.perm, vec![0, 1, 2]);
        assert_eq!(a.objective, 0.0);
    }

    #[test]
    fn brute_force_small_cases() {
        let one = array![[3.5]];
        assert_eq!(brute_force_assignment(&one).unwrap().perm, vec![0]);
        let two = array![[0.0, 5.0], [5.0, 0.0]];
        let a = brute_force_assignment(&two).unwrap();
        assert_eq!(a.perm, vec![0, 1]);
        assert_eq!(a.objective, 0.0);
        let big = Array2::<f64>::zeros((10, 10));
        assert!(matches!(brute_force_assignment(&big), Err(OtError::TooLarge { n: 10, .. })));
    }

    #[test]
    fn ties_resolve_to_smallest_permutation() {
        let flat = Array2::<f64>::from_elem((5, 5), 1.0);
        assert_eq!(solve_assignment(&flat).unwrap().perm, vec![0, 1, 2, 3, 4]);
        // Two optimal assignments: (1, 0, 2) and (0, 1, 2) have equal cost.
        let c = array![[1.0, 1.0, 9.0], [1.0, 1.0, 9.0], [9.0, 9.0, 0.0]];
        assert_eq!(solve_assignment(&c).unwrap().perm, vec![0, 1, 2]);
        // Reversed anti-diagonal optimum.
        let c = array![[2.0, 2.0, 0.0], [2.0, 0.0, 2.0], [0.0, 2.0, 2.0]];
        assert_eq!(solve_assignment(&c).unwrap().perm, vec![2, 1, 0]);
    }

    #[test]
    fn tie_break_matches_brute_force_on_integer_costs() {
        let mut rng = crate::rng::seeded(91);
        for _ in 0..300 {
            let n = rng.random_range(2..=6);
            let c = Array2::from_shape_fn((n, n), |_| rng.random_range(0..4) as f64);
            let h = solve_assignment(&c).unwrap();
            let b = brute_force_assignment(&c).unwrap();
            assert_eq!(h.perm, b.perm, "{c:?}");
            assert_eq!(h.objective, b.objective);
        }
    }

    #[test]
    fn rejects_bad_input() {
        let c = array![[0.0, f64::NAN], [1.0, 0.0]];
        assert!(matches!(solve_assignment(&c), Err(OtError::NonFinite { row: 0, col: 1 })));
        let r = Array2::<f64>::zeros((2, 3));
        assert!(matches!(solve_assignment(&r), Err(OtError::NotSquare { .. })));
    }

    #[test]
    fn works_in_single_precision() {
        let c: Array2<f32> = array![[4.0, 1.0, 3.0], [2.0, 0.0, 5.0], [3.0, 2.0, 2.0]];
        let a = solve_assignment(&c).unwrap();
        assert_eq!(a.perm, brute_force_assignment(&c).unwrap().perm);
        assert_eq!(a.objective, 5.0);
    }
}
