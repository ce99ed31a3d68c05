//! Banded LU factorization without pivoting, for the real symmetric-definite
//! per-mode systems of the implicit substeps (tridiagonal and pentadiagonal).

use std::ops::{Div, Mul, Sub};

use crate::error::{LabError, Result};

/// LU factors of an `n × n` matrix with `p` sub- and super-diagonals.
#[derive(Debug, Clone)]
pub struct BandedLu {
    n: usize,
    p: usize,
    /// Row-major band storage: entry `(i, j)` lives at `i*(2p+1) + (j + p - i)`.
    band: Vec<f64>,
}

impl BandedLu {
    /// Factors the matrix whose entries are given by `entry(i, j)` for
    /// `|i - j| <= p`. `mode` is only used to label a singular pivot.
    pub fn factor(
        n: usize,
        p: usize,
        mode: usize,
        entry: impl Fn(usize, usize) -> f64,
    ) -> Result<Self> {
        let w = 2 * p + 1;
        let mut band = vec![0.0; n * w];
        for i in 0..n {
            let lo = i.saturating_sub(p);
            let hi = (i + p).min(n - 1);
            for j in lo..=hi {
                band[i * w + (j + p - i)] = entry(i, j);
            }
        }
        let scale = band
            .iter()
            .fold(0.0f64, |m, v| m.max(v.abs()))
            .max(f64::MIN_POSITIVE);
        for k in 0..n {
            let pivot = band[k * w + p];
            if !pivot.is_finite() || pivot.abs() <= 1e-14 * scale {
                return Err(LabError::SolverSingular { mode, pivot });
            }
            let last = (k + p).min(n - 1);
            for i in k + 1..=last {
                let lik = band[i * w + (k + p - i)] / pivot;
                band[i * w + (k + p - i)] = lik;
                for j in k + 1..=last {
                    band[i * w + (j + p - i)] -= lik * band[k * w + (j + p - k)];
                }
            }
        }
        Ok(Self { n, p, band })
    }

    /// Tridiagonal factorization from constant off-diagonals and a diagonal.
    pub fn tridiagonal(diag: &[f64], off: f64, mode: usize) -> Result<Self> {
        Self::factor(
            diag.len(),
            1,
            mode,
            |i, j| if i == j { diag[i] } else { off },
        )
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Solves in place for any right-hand side scalar type (real or complex).
    pub fn solve_in_place<T>(&self, rhs: &mut [T])
    where
        T: Copy + Sub<Output = T> + Mul<f64, Output = T> + Div<f64, Output = T>,
    {
        let (n, p) = (self.n, self.p);
        let w = 2 * p + 1;
        assert_eq!(rhs.len(), n);
        for i in 0..n {
            let lo = i.saturating_sub(p);
            let mut acc = rhs[i];
            for k in lo..i {
                acc = acc - rhs[k] * self.band[i * w + (k + p - i)];
            }
            rhs[i] = acc;
        }
        for i in (0..n).rev() {
            let hi = (i + p).min(n - 1);
            let mut acc = rhs[i];
            for j in i + 1..=hi {
                acc = acc - rhs[j] * self.band[i * w + (j + p - i)];
            }
            rhs[i] = acc / self.band[i * w + p];
        }
    }
}
