//! Exact references independent of the learned critic and of autodiff:
//! Wasserstein-1 between equal-size empirical distributions, and central
//! finite differences.

pub mod hungarian;

use crate::error::{DialError, Result};
use crate::linalg;

/// Largest point count accepted by [`w1_exact_assignment`].
pub const ASSIGNMENT_CAP: usize = 512;

/// Uniformly weighted point cloud.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalDistribution {
    points: Vec<Vec<f64>>,
}

impl EmpiricalDistribution {
    pub fn new(points: Vec<Vec<f64>>) -> Result<Self> {
        let first = points.first().ok_or(DialError::Empty("empirical distribution"))?;
        let d = first.len();
        if let Some(bad) = points.iter().find(|p| p.len() != d) {
            return Err(DialError::SizeMismatch(d, bad.len()));
        }
        Ok(Self { points })
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points[0].len()
    }
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// Exact W1 between two equal-size 1-D samples: mean gap of sorted values.
pub fn w1_exact_1d(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(DialError::SizeMismatch(a.len(), b.len()));
    }
    if a.is_empty() {
        return Err(DialError::Empty("w1_exact_1d"));
    }
    let mut sa = a.to_vec();
    let mut sb = b.to_vec();
    sa.sort_by(f64::total_cmp);
    sb.sort_by(f64::total_cmp);
    let total: f64 = sa.iter().zip(&sb).map(|(x, y)| (x - y).abs()).sum();
    Ok(total / a.len() as f64)
}

fn cost_matrix(p: &EmpiricalDistribution, q: &EmpiricalDistribution) -> Result<Vec<f64>> {
    if p.len() != q.len() {
        return Err(DialError::SizeMismatch(p.len(), q.len()));
    }
    if p.dim() != q.dim() {
        return Err(DialError::Shape {
            op: "w1",
            lhs: vec![p.len(), p.dim()],
            rhs: vec![q.len(), q.dim()],
        });
    }
    Ok(p.points()
        .iter()
        .flat_map(|a| q.points().iter().map(move |b| euclidean(a, b)))
        .collect())
}

/// Exact W1 under the Euclidean ground metric via optimal assignment.
pub fn w1_exact_assignment(p: &EmpiricalDistribution, q: &EmpiricalDistribution) -> Result<f64> {
    let n = p.len();
    if n > ASSIGNMENT_CAP || q.len() > ASSIGNMENT_CAP {
        return Err(DialError::TooLarge {
            n: n.max(q.len()),
            cap: ASSIGNMENT_CAP,
        });
    }
    let cost = cost_matrix(p, q)?;
    let assignment = hungarian::solve(&cost, n)?;
    Ok(hungarian::assignment_cost(&cost, n, &assignment) / n as f64)
}

/// W1 by enumerating all `n!` bijections. Only for tiny `n`.
pub fn w1_brute_force(p: &EmpiricalDistribution, q: &EmpiricalDistribution) -> Result<f64> {
    let n = p.len();
    if n > 9 {
        return Err(DialError::TooLarge { n, cap: 9 });
    }
    let cost = cost_matrix(p, q)?;
    let mut perm: Vec<usize> = (0..n).collect();
    let mut best = f64::INFINITY;
    // Heap's algorithm
    let mut c = vec![0usize; n];
    best = best.min(hungarian::assignment_cost(&cost, n, &perm));
    let mut i = 0;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                perm.swap(0, i);
            } else {
                perm.swap(c[i], i);
            }
            best = best.min(hungarian::assignment_cost(&cost, n, &perm));
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    Ok(best / n as f64)
}

/// Central differences `(f(x + h e_i) - f(x - h e_i)) / 2h` per coordinate.
pub fn finite_diff_grad(mut f: impl FnMut(&[f64]) -> f64, point: &[f64], h: f64) -> Result<Vec<f64>> {
    if h <= 0.0 {
        return Err(DialError::InvalidArgument(format!("step must be > 0, got {h}")));
    }
    let mut x = point.to_vec();
    let mut grad = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let orig = x[i];
        x[i] = orig + h;
        let up = f(&x);
        x[i] = orig - h;
        let down = f(&x);
        x[i] = orig;
        if !up.is_finite() || !down.is_finite() {
            return Err(DialError::InvalidArgument(format!(
                "non-finite evaluation at coordinate {i}"
            )));
        }
        grad.push((up - down) / (2.0 * h));
    }
    Ok(grad)
}

/// Default step for [`finite_diff_grad`].
pub const FD_STEP: f64 = 1e-5;

/// `|a - b| / max(|a|, |b|, floor)`, the comparison used by gradient checks.
pub fn relative_error(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

/// Largest elementwise relative error between two gradient vectors.
pub fn max_relative_error(a: &[f64], b: &[f64], floor: f64) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| relative_error(*x, *y, floor))
        .fold(0.0, f64::max)
}

/// `|a - b|_2 / max(|a|_2, |b|_2, floor)` over whole vectors.
pub fn vector_relative_error(a: &[f64], b: &[f64], floor: f64) -> f64 {
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    linalg::norm(&diff) / linalg::norm(a).max(linalg::norm(b)).max(floor)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dist(v: &[&[f64]]) -> EmpiricalDistribution {
        EmpiricalDistribution::new(v.iter().map(|p| p.to_vec()).collect()).unwrap()
    }

    #[test]
    fn one_d_examples() {
        assert_eq!(w1_exact_1d(&[1.0, 5.0, -2.0], &[5.0, -2.0, 1.0]).unwrap(), 0.0);
        assert_eq!(w1_exact_1d(&[0.0, 2.0], &[1.0, 3.0]).unwrap(), 1.0);
        let a = [0.3, -1.2, 4.4, 2.0];
        let b: Vec<f64> = a.iter().map(|v| v - 2.5).collect();
        assert!((w1_exact_1d(&a, &b).unwrap() - 2.5).abs() < 1e-15);
        assert!(w1_exact_1d(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn assignment_examples() {
        let p = dist(&[&[0.0, 0.0], &[1.0, 1.0], &[3.0, -1.0]]);
        assert_eq!(w1_exact_assignment(&p, &p).unwrap(), 0.0);
        let q = dist(&[&[0.0], &[2.0]]);
        let r = dist(&[&[3.0], &[1.0]]);
        assert_eq!(w1_exact_assignment(&q, &r).unwrap(), 1.0);
        assert_eq!(w1_brute_force(&q, &r).unwrap(), 1.0);
    }

    #[test]
    fn size_errors() {
        let p = dist(&[&[0.0], &[1.0]]);
        let q = dist(&[&[0.0]]);
        assert!(w1_exact_assignment(&p, &q).is_err());
        let big = EmpiricalDistribution::new(vec![vec![0.0]; 513]).unwrap();
        assert!(matches!(
            w1_exact_assignment(&big, &big),
            Err(DialError::TooLarge { n: 513, cap: 512 })
        ));
        assert!(EmpiricalDistribution::new(vec![]).is_err());
        assert!(EmpiricalDistribution::new(vec![vec![1.0], vec![1.0, 2.0]]).is_err());
    }

    #[test]
    fn finite_differences() {
        let x = [0.5, -1.5, 2.0];
        let g = finite_diff_grad(|v| 0.5 * v.iter().map(|a| a * a).sum::<f64>(), &x, FD_STEP).unwrap();
        for (a, b) in g.iter().zip(&x) {
            assert!((a - b).abs() < 1e-9);
        }
        let w = [3.0, -1.0, 0.25];
        let g = finite_diff_grad(|v| linalg::dot(&w, v), &x, FD_STEP).unwrap();
        for (a, b) in g.iter().zip(&w) {
            assert!((a - b).abs() < 1e-9);
        }
        assert!(finite_diff_grad(|v| 1.0 / v[0], &[0.0], 1e-5).is_ok());
        assert!(finite_diff_grad(|v| v[0].ln(), &[0.0], 1e-5).is_err());
    }
}
