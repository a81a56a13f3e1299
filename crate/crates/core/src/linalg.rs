//! Small dense helpers shared by the Lipschitz bound and the PCA projection.

use crate::autodiff::Tensor;
use crate::error::{DialError, Result};

pub const POWER_MAX_ITERS: usize = 200;
pub const POWER_TOL: f64 = 1e-9;

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `m x v` for a square row-major matrix of side `n`.
pub fn sym_matvec(m: &[f64], n: usize, v: &[f64]) -> Vec<f64> {
    (0..n).map(|i| dot(&m[i * n..(i + 1) * n], v)).collect()
}

/// Deterministic start vector with no exact symmetry.
fn start_vector(n: usize) -> Vec<f64> {
    let v: Vec<f64> = (0..n).map(|i| 1.0 + 0.1 * ((i * 7 + 3) % 11) as f64).collect();
    let s = norm(&v);
    v.into_iter().map(|x| x / s).collect()
}

/// Dominant eigenpair of a symmetric positive semidefinite matrix.
///
/// Stops when the Rayleigh quotient changes by less than `tol` relative to
/// its magnitude. Returns `(eigenvalue, unit eigenvector)`.
pub fn power_iteration_psd(m: &[f64], n: usize, max_iters: usize, tol: f64) -> Result<(f64, Vec<f64>)> {
    if n == 0 {
        return Ok((0.0, Vec::new()));
    }
    let mut v = start_vector(n);
    let mut lambda = dot(&v, &sym_matvec(m, n, &v));
    for _ in 0..max_iters {
        let w = sym_matvec(m, n, &v);
        let wn = norm(&w);
        if wn == 0.0 {
            return Ok((0.0, v));
        }
        v = w.into_iter().map(|x| x / wn).collect();
        let next = dot(&v, &sym_matvec(m, n, &v));
        if (next - lambda).abs() <= tol * next.abs().max(f64::MIN_POSITIVE) {
            return Ok((next, v));
        }
        lambda = next;
    }
    let mv = sym_matvec(m, n, &v);
    let residual = mv
        .iter()
        .zip(&v)
        .map(|(a, b)| (a - lambda * b).powi(2))
        .sum::<f64>()
        .sqrt();
    Err(DialError::NoConvergence {
        iters: max_iters,
        residual,
    })
}

/// Largest singular value via power iteration on the smaller Gram matrix.
pub fn spectral_norm(w: &Tensor) -> Result<f64> {
    if w.rank() != 2 {
        return Err(DialError::Shape {
            op: "spectral_norm",
            lhs: w.shape().to_vec(),
            rhs: vec![],
        });
    }
    let (r, c) = (w.shape()[0], w.shape()[1]);
    let gram = if c <= r {
        w.transpose()?.matmul(w)?
    } else {
        w.matmul(&w.transpose()?)?
    };
    let n = r.min(c);
    let (lambda, _) = power_iteration_psd(gram.data(), n, POWER_MAX_ITERS, POWER_TOL)?;
    Ok(lambda.max(0.0).sqrt())
}
