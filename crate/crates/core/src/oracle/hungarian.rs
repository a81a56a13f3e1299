//! Shortest-augmenting-path Hungarian algorithm with row/column potentials.
//!
//! `O(n^3)` for a dense square cost matrix.

use crate::error::{DialError, Result};

/// Minimum-cost perfect matching on a row-major `n x n` cost matrix.
///
/// Returns `assignment[row] = col`.
pub fn solve(cost: &[f64], n: usize) -> Result<Vec<usize>> {
    if cost.len() != n * n {
        return Err(DialError::SizeMismatch(cost.len(), n * n));
    }
    if cost.iter().any(|c| !c.is_finite()) {
        return Err(DialError::InvalidArgument("non-finite cost".into()));
    }
    if n == 0 {
        return Ok(Vec::new());
    }

    // 1-based indexing; column 0 is a virtual source.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut row_of_col = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];

    for i in 1..=n {
        row_of_col[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = row_of_col[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost[(i0 - 1) * n + (j - 1)] - u[i0] - v[j];
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
                    u[row_of_col[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if row_of_col[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            row_of_col[j0] = row_of_col[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut assignment = vec![0usize; n];
    for j in 1..=n {
        assignment[row_of_col[j] - 1] = j - 1;
    }
    Ok(assignment)
}

/// Total cost of an assignment, summed in row order.
pub fn assignment_cost(cost: &[f64], n: usize, assignment: &[usize]) -> f64 {
    assignment.iter().enumerate().map(|(i, &j)| cost[i * n + j]).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn textbook_instance() {
        let cost = [8.0, 4.0, 7.0, 5.0, 2.0, 3.0, 9.0, 4.0, 8.0];
        let a = solve(&cost, 3).unwrap();
        assert_eq!(assignment_cost(&cost, 3, &a), 15.0);
    }

    #[test]
    fn assignment_is_a_permutation() {
        let n = 6;
        let cost: Vec<f64> = (0..n * n).map(|k| ((k * 37 + 11) % 17) as f64).collect();
        let mut a = solve(&cost, n).unwrap();
        a.sort_unstable();
        assert_eq!(a, (0..n).collect::<Vec<_>>());
    }

    #[test]
    fn rejects_bad_sizes() {
        assert!(solve(&[1.0, 2.0], 2).is_err());
        assert!(solve(&[f64::NAN], 1).is_err());
        assert!(solve(&[], 0).unwrap().is_empty());
    }
}
