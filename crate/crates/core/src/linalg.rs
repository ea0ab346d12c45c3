//! Small dense linear algebra on row-major `f64` buffers.
//!
//! Everything the sampler touches is a `k x k` system with `k` at most a few dozen,
//! so a plain Cholesky factorization is all that is needed.

use alloc::vec;
use alloc::vec::Vec;

use crate::{Error, Result};

/// Jitter factors (relative to the trace) tried in turn when a factorization fails.
const JITTER_LADDER: [f64; 6] = [0.0, 1e-12, 1e-11, 1e-10, 1e-9, 1e-8];

/// Lower-triangular Cholesky factor `L` with `A = L L^T`, stored row-major.
#[derive(Debug, Clone, Default)]
pub struct Cholesky {
    n: usize,
    l: Vec<f64>,
    jitter: f64,
}

impl Cholesky {
    /// Factorizes the symmetric matrix `a` (row-major, `n x n`), escalating an additive
    /// diagonal jitter from `1e-12` to `1e-8` of the trace before giving up.
    pub fn factor(a: &[f64], n: usize) -> Result<Self> {
        let mut chol = Cholesky::default();
        chol.refactor(a, n)?;
        Ok(chol)
    }

    /// Same as [`Cholesky::factor`] but reuses this factor's storage.
    pub fn refactor(&mut self, a: &[f64], n: usize) -> Result<()> {
        debug_assert_eq!(a.len(), n * n);
        self.n = n;
        self.l.clear();
        self.l.resize(n * n, 0.0);
        let trace: f64 = (0..n).map(|i| a[i * n + i]).sum();
        for &factor in JITTER_LADDER.iter() {
            let jitter = factor * trace.abs();
            if factor > 0.0 && jitter == 0.0 {
                break;
            }
            if factor_in_place(a, n, jitter, &mut self.l) {
                self.jitter = jitter;
                return Ok(());
            }
        }
        Err(Error::NotPositiveDefinite {
            order: n,
            jitter: JITTER_LADDER[JITTER_LADDER.len() - 1] * trace.abs(),
            trace,
        })
    }

    pub fn order(&self) -> usize {
        self.n
    }

    /// Diagonal jitter that was needed for the factorization to succeed.
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn log_det(&self) -> f64 {
        let n = self.n;
        2.0 * (0..n).map(|i| self.l[i * n + i].ln()).sum::<f64>()
    }

    /// Solves `L z = b` in place.
    pub fn forward(&self, b: &mut [f64]) {
        let n = self.n;
        for i in 0..n {
            let row = &self.l[i * n..i * n + i];
            let s: f64 = row.iter().zip(b.iter()).map(|(l, x)| l * x).sum();
            b[i] = (b[i] - s) / self.l[i * n + i];
        }
    }

    /// Solves `L^T x = z` in place.
    pub fn backward(&self, b: &mut [f64]) {
        let n = self.n;
        for i in (0..n).rev() {
            let mut s = b[i];
            for j in i + 1..n {
                s -= self.l[j * n + i] * b[j];
            }
            b[i] = s / self.l[i * n + i];
        }
    }

    /// Solves `A x = b` in place.
    pub fn solve(&self, b: &mut [f64]) {
        self.forward(b);
        self.backward(b);
    }

    /// Dense inverse `A^{-1}`, row-major.
    pub fn inverse(&self) -> Vec<f64> {
        let n = self.n;
        let mut inv = vec![0.0; n * n];
        let mut col = vec![0.0; n];
        for j in 0..n {
            col.iter_mut().for_each(|c| *c = 0.0);
            col[j] = 1.0;
            self.solve(&mut col);
            for i in 0..n {
                inv[i * n + j] = col[i];
            }
        }
        // symmetrize against round-off
        for i in 0..n {
            for j in 0..i {
                let v = 0.5 * (inv[i * n + j] + inv[j * n + i]);
                inv[i * n + j] = v;
                inv[j * n + i] = v;
            }
        }
        inv
    }
}

fn factor_in_place(a: &[f64], n: usize, jitter: f64, l: &mut [f64]) -> bool {
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[i * n + j];
            if i == j {
                s += jitter;
            }
            for p in 0..j {
                s -= l[i * n + p] * l[j * n + p];
            }
            if i == j {
                if !(s > 0.0) || !s.is_finite() {
                    return false;
                }
                l[i * n + i] = s.sqrt();
            } else {
                l[i * n + j] = s / l[j * n + j];
            }
        }
    }
    true
}

/// `y = A x` for row-major `A` (`rows x cols`).
pub fn mat_vec(a: &[f64], rows: usize, cols: usize, x: &[f64]) -> Vec<f64> {
    debug_assert_eq!(a.len(), rows * cols);
    (0..rows)
        .map(|i| a[i * cols..(i + 1) * cols].iter().zip(x).map(|(u, v)| u * v).sum())
        .collect()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn factor_and_solve_spd() {
        let a = [4.0, 2.0, 0.6, 2.0, 5.0, 1.0, 0.6, 1.0, 3.0];
        let chol = Cholesky::factor(&a, 3).unwrap();
        assert_eq!(chol.jitter(), 0.0);
        let mut b = [1.0, 2.0, 3.0];
        chol.solve(&mut b);
        let back = mat_vec(&a, 3, 3, &b);
        for (x, y) in back.iter().zip([1.0, 2.0, 3.0]) {
            assert_relative_eq!(*x, y, epsilon = 1e-12);
        }
        // det by cofactor expansion
        let det: f64 = 4.0 * (5.0 * 3.0 - 1.0) - 2.0 * (2.0 * 3.0 - 0.6) + 0.6 * (2.0 - 5.0 * 0.6);
        assert_relative_eq!(chol.log_det(), det.ln(), epsilon = 1e-12);
    }

    #[test]
    fn inverse_times_matrix_is_identity() {
        let a = [2.0, -1.0, -1.0, 2.0];
        let inv = Cholesky::factor(&a, 2).unwrap().inverse();
        assert_relative_eq!(inv[0], 2.0 / 3.0, epsilon = 1e-14);
        assert_relative_eq!(inv[1], 1.0 / 3.0, epsilon = 1e-14);
    }

    #[test]
    fn singular_psd_matrix_needs_jitter() {
        let a = [1.0, 1.0, 1.0, 1.0];
        let chol = Cholesky::factor(&a, 2).unwrap();
        assert!(chol.jitter() > 0.0);
    }

    #[test]
    fn indefinite_matrix_is_rejected() {
        let a = [1.0, 0.0, 0.0, -1.0];
        let err = Cholesky::factor(&a, 2).unwrap_err();
        assert!(matches!(err, Error::NotPositiveDefinite { order: 2, .. }));
        assert!(err.is_numerical());
    }

    #[test]
    fn empty_matrix_is_trivial() {
        let chol = Cholesky::factor(&[], 0).unwrap();
        assert_eq!(chol.log_det(), 0.0);
    }
}
