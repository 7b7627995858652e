//! Dense Hermitian eigendecomposition.
//!
//! Thin deterministic wrapper around `faer`'s self-adjoint solver. The
//! backend is forced to sequential execution once per process so that results
//! are bitwise reproducible regardless of ambient thread pools; concurrency
//! belongs to callers, which may diagonalize distinct matrices in parallel.

use crate::error::{Error, Result};
use crate::Complex;
use faer::{c64, Mat, Side};
use std::sync::Once;

static INIT: Once = Once::new();

fn init_backend() {
    INIT.call_once(|| {
        faer::set_global_parallelism(faer::Par::Seq);
    });
}

/// Result of a Hermitian eigendecomposition: eigenvalues ascending, with the
/// matching eigenvectors stored column-major.
#[derive(Debug, Clone)]
pub struct Eigh {
    n: usize,
    /// Eigenvalues in ascending order.
    pub values: Vec<f64>,
    /// Column-major eigenvector storage; column `j` pairs with `values[j]`.
    vectors: Vec<Complex>,
}

impl Eigh {
    /// Matrix dimension.
    pub fn dim(&self) -> usize {
        self.n
    }

    /// Unit-norm eigenvector for `values[j]`.
    pub fn vector(&self, j: usize) -> &[Complex] {
        &self.vectors[j * self.n..(j + 1) * self.n]
    }
}

/// Diagonalizes a Hermitian matrix given in row-major dense storage.
///
/// Only the lower triangle is read, matching the Hermitian construction of
/// the callers. Eigenvalues are returned in ascending order; each eigenvector
/// has unit Euclidean norm. Fails if the backend does not converge.
pub fn eigh(matrix: &[Complex], n: usize) -> Result<Eigh> {
    assert_eq!(matrix.len(), n * n, "matrix storage must be n×n");
    init_backend();

    let m: Mat<c64> = Mat::from_fn(n, n, |i, j| {
        let z = matrix[i * n + j];
        c64::new(z.re, z.im)
    });
    let evd = m
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::EigensolveFailure(format!("{e:?}")))?;

    let s = evd.S();
    let u = evd.U();
    let mut order: Vec<usize> = (0..n).collect();
    let raw: Vec<f64> = (0..n).map(|i| s[i].re).collect();
    order.sort_by(|&a, &b| raw[a].total_cmp(&raw[b]));

    let mut values = Vec::with_capacity(n);
    let mut vectors = vec![Complex::new(0.0, 0.0); n * n];
    for (dst, &src) in order.iter().enumerate() {
        values.push(raw[src]);
        for i in 0..n {
            let z = u[(i, src)];
            vectors[dst * n + i] = Complex::new(z.re, z.im);
        }
    }
    Ok(Eigh { n, values, vectors })
}

/// Eigenvalues only, ascending.
pub fn eigvalsh(matrix: &[Complex], n: usize) -> Result<Vec<f64>> {
    Ok(eigh(matrix, n)?.values)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_by_two_closed_form() {
        // [[1, i], [-i, 3]] has eigenvalues 2 ± √2.
        let m = vec![
            Complex::new(1.0, 0.0),
            Complex::new(0.0, 1.0),
            Complex::new(0.0, -1.0),
            Complex::new(3.0, 0.0),
        ];
        let e = eigh(&m, 2).unwrap();
        let s2 = 2.0f64.sqrt();
        assert!((e.values[0] - (2.0 - s2)).abs() < 1e-12);
        assert!((e.values[1] - (2.0 + s2)).abs() < 1e-12);
        // Residual check ‖Av − λv‖.
        for j in 0..2 {
            let v = e.vector(j);
            for i in 0..2 {
                let mut acc = Complex::new(0.0, 0.0);
                for k in 0..2 {
                    acc += m[i * 2 + k] * v[k];
                }
                acc -= v[i] * e.values[j];
                assert!(acc.norm() < 1e-12);
            }
        }
    }
}
