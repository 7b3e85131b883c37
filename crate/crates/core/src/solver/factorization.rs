use std::sync::atomic::{AtomicUsize, Ordering};

use faer::linalg::solvers::{PartialPivLu, Solve};
use faer::sparse::linalg::solvers::Lu;
use faer::{Mat, MatRef};

use crate::error::{LyapError, Result};
use crate::matrix::{MatrixHandle, Storage};
use crate::spectral::ShiftParameter;

enum Factor {
    Dense(PartialPivLu<f64>),
    Sparse(Lu<usize, f64>),
}

/// Counts of multi-column operations performed through a factorization.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct OpCounts {
    /// Solves with `A - sigma I`.
    pub solves: usize,
    /// Products with `A + sigma I`.
    pub shifted_multiplies: usize,
}

/// LU factors of `A - sigma I`, computed once and reused for every solve.
pub struct ShiftedFactorization {
    sigma: ShiftParameter,
    n: usize,
    factor: Factor,
    solves: AtomicUsize,
    multiplies: AtomicUsize,
}

impl std::fmt::Debug for ShiftedFactorization {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ShiftedFactorization")
            .field("sigma", &self.sigma)
            .field("n", &self.n)
            .field("sparse", &matches!(self.factor, Factor::Sparse(_)))
            .field("counts", &self.counts())
            .finish()
    }
}

/// Relative solve error above which the factorization is reported singular.
const SINGULAR_CHECK_TOL: f64 = 1e-6;

pub fn shifted_factorize(a: &MatrixHandle, sigma: ShiftParameter) -> Result<ShiftedFactorization> {
    ShiftedFactorization::new(a, sigma)
}

impl ShiftedFactorization {
    pub fn new(a: &MatrixHandle, sigma: ShiftParameter) -> Result<Self> {
        if !a.is_square() {
            return Err(LyapError::NotSquare {
                rows: a.rows(),
                cols: a.cols(),
            });
        }
        let n = a.rows();
        let s = sigma.value();
        let factor = match a.storage() {
            Storage::DenseColumnMajor(m) => {
                let shifted = Mat::from_fn(n, n, |i, j| if i == j { m[(i, j)] - s } else { m[(i, j)] });
                let lu = shifted.partial_piv_lu();
                let u = lu.U();
                let max = (0..n).map(|i| u[(i, i)].abs()).fold(0.0, f64::max);
                let min = (0..n).map(|i| u[(i, i)].abs()).fold(f64::INFINITY, f64::min);
                if !(min > f64::EPSILON * n as f64 * max) {
                    return Err(LyapError::Singular(format!(
                        "A - sigma I has pivot ratio {:.3e} at sigma = {s}",
                        min / max
                    )));
                }
                Factor::Dense(lu)
            }
            Storage::SparseCoordinate(_) => {
                let shifted = a.shifted_sparse(-s)?;
                let lu = shifted
                    .sp_lu()
                    .map_err(|e| LyapError::Singular(format!("sparse LU of A - sigma I failed: {e:?}")))?;
                Factor::Sparse(lu)
            }
        };
        let fact = Self {
            sigma,
            n,
            factor,
            solves: AtomicUsize::new(0),
            multiplies: AtomicUsize::new(0),
        };
        fact.check_solve(a)?;
        Ok(fact)
    }

    /// Solves against `(A - sigma I) x` for a fixed `x` and compares.
    fn check_solve(&self, a: &MatrixHandle) -> Result<()> {
        let x = Mat::from_fn(self.n, 1, |i, _| 1.0 + (i % 7) as f64 / 7.0);
        let rhs = a.shifted_mul_dense(-self.sigma.value(), x.as_ref());
        let got = self.raw_solve(rhs.as_ref());
        let err = (&got - &x).norm_l2() / x.norm_l2();
        if !(err <= SINGULAR_CHECK_TOL) {
            return Err(LyapError::Singular(format!(
                "A - sigma I is numerically singular at sigma = {} (check error {err:.3e})",
                self.sigma.value()
            )));
        }
        Ok(())
    }

    fn raw_solve(&self, rhs: MatRef<'_, f64>) -> Mat<f64> {
        match &self.factor {
            Factor::Dense(lu) => lu.solve(rhs),
            Factor::Sparse(lu) => lu.solve(rhs),
        }
    }

    pub fn sigma(&self) -> ShiftParameter {
        self.sigma
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// `(A - sigma I)^{-1} rhs` for a multi-column block.
    pub fn solve(&self, rhs: MatRef<'_, f64>) -> Result<Mat<f64>> {
        if rhs.nrows() != self.n {
            return Err(LyapError::Dimension(format!(
                "solve: rhs has {} rows, factorization is {}x{}",
                rhs.nrows(),
                self.n,
                self.n
            )));
        }
        self.solves.fetch_add(1, Ordering::Relaxed);
        Ok(self.raw_solve(rhs))
    }

    /// `(A + sigma I) w` for a multi-column block.
    pub fn shifted_multiply(&self, a: &MatrixHandle, w: MatRef<'_, f64>) -> Result<Mat<f64>> {
        if a.rows() != self.n || w.nrows() != self.n {
            return Err(LyapError::Dimension(format!(
                "shifted multiply: A is {}x{}, block has {} rows, factorization is {}",
                a.rows(),
                a.cols(),
                w.nrows(),
                self.n
            )));
        }
        self.multiplies.fetch_add(1, Ordering::Relaxed);
        Ok(a.shifted_mul_dense(self.sigma.value(), w))
    }

    pub fn counts(&self) -> OpCounts {
        OpCounts {
            solves: self.solves.load(Ordering::Relaxed),
            shifted_multiplies: self.multiplies.load(Ordering::Relaxed),
        }
    }
}
