//! Desk-scale reference solvers.
//!
//! Nothing here is meant to be fast: every routine assembles dense matrices
//! of order `n` or `n^2` and serves as ground truth for the iterative solver.

use faer::linalg::solvers::{DenseSolveCore, Solve};
use faer::{c64, Mat, MatRef, Side};

use crate::error::{LyapError, Result};
use crate::linalg::{condition_number, real_part, symmetrize, to_complex};
use crate::matrix::{MatrixHandle, StableSystem};
use crate::spectral::ShiftParameter;
use crate::warmstart::cauchy_core;

#[derive(Debug, Clone)]
pub struct OracleLimits {
    /// Largest `n` for the `n^2 x n^2` Kronecker solve.
    pub kron_cap: usize,
    /// Largest `n` for the dense iteration-matrix eigensolve.
    pub radius_cap: usize,
    /// Eigenvector condition number above which `A` counts as near-defective.
    pub eigvec_cond_limit: f64,
    pub asymmetry_tol: f64,
    pub psd_tol: f64,
}

impl Default for OracleLimits {
    fn default() -> Self {
        Self {
            kron_cap: 60,
            radius_cap: 12,
            eigvec_cond_limit: 1e8,
            asymmetry_tol: 1e-9,
            psd_tol: 1e-10,
        }
    }
}

/// Kronecker product `x (x) y`.
pub fn kron(x: MatRef<'_, f64>, y: MatRef<'_, f64>) -> Mat<f64> {
    let (xr, xc, yr, yc) = (x.nrows(), x.ncols(), y.nrows(), y.ncols());
    Mat::from_fn(xr * yr, xc * yc, |i, j| x[(i / yr, j / yc)] * y[(i % yr, j % yc)])
}

/// Column-stacking `vec`.
pub fn vec_of(m: MatRef<'_, f64>) -> Mat<f64> {
    let (r, c) = (m.nrows(), m.ncols());
    Mat::from_fn(r * c, 1, |k, _| m[(k % r, k / r)])
}

/// Inverse of [`vec_of`] for an `n x n` matrix.
pub fn unvec(v: MatRef<'_, f64>, n: usize) -> Mat<f64> {
    Mat::from_fn(n, n, |i, j| v[(i + j * n, 0)])
}

/// `I (x) X + Y (x) I` for column-stacked unknowns, i.e. `P -> X P + P Y^T`.
#[derive(Debug, Clone)]
pub struct KroneckerOperator {
    n: usize,
    matrix: Mat<f64>,
}

impl KroneckerOperator {
    /// `I (x) A + A (x) I`.
    pub fn lyapunov(a: MatRef<'_, f64>) -> Self {
        Self::assemble(a, a)
    }

    /// `I (x) (A - sigma I) + (A + sigma I) (x) I`; represents the same map as [`Self::lyapunov`].
    pub fn shifted(a: MatRef<'_, f64>, sigma: f64) -> Self {
        let n = a.nrows();
        let minus = Mat::from_fn(n, n, |i, j| a[(i, j)] - if i == j { sigma } else { 0.0 });
        let plus = Mat::from_fn(n, n, |i, j| a[(i, j)] + if i == j { sigma } else { 0.0 });
        Self::assemble(minus.as_ref(), plus.as_ref())
    }

    fn assemble(left: MatRef<'_, f64>, right: MatRef<'_, f64>) -> Self {
        let n = left.nrows();
        let eye = Mat::<f64>::identity(n, n);
        let matrix = kron(eye.as_ref(), left) + kron(right, eye.as_ref());
        Self { n, matrix }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn matrix(&self) -> MatRef<'_, f64> {
        self.matrix.as_ref()
    }

    /// Solves `K p = rhs` densely, failing on a numerically singular operator.
    pub fn solve(&self, rhs: MatRef<'_, f64>) -> Result<Mat<f64>> {
        let lu = self.matrix.partial_piv_lu();
        let u = lu.U();
        let m = u.nrows();
        let max = (0..m).map(|i| u[(i, i)].abs()).fold(0.0, f64::max);
        let min = (0..m).map(|i| u[(i, i)].abs()).fold(f64::INFINITY, f64::min);
        if !(min > 1e3 * f64::EPSILON * max) {
            return Err(LyapError::Singular(format!(
                "Kronecker operator of order {m} is singular (pivot ratio {:.3e}); A is not stable",
                if max > 0.0 { min / max } else { 0.0 }
            )));
        }
        Ok(lu.solve(rhs))
    }
}

fn check_cap(what: &'static str, n: usize, cap: usize) -> Result<()> {
    if n > cap {
        Err(LyapError::CapExceeded { what, n, cap })
    } else {
        Ok(())
    }
}

pub fn kron_solve(sys: &StableSystem) -> Result<Mat<f64>> {
    kron_solve_with(sys, &OracleLimits::default())
}

/// Solves `(I (x) A + A (x) I) vec(P) = vec(-B B^T)` and checks that `P` is
/// symmetric and positive semidefinite to tolerance.
pub fn kron_solve_with(sys: &StableSystem, limits: &OracleLimits) -> Result<Mat<f64>> {
    let n = sys.n();
    check_cap("Kronecker solve", n, limits.kron_cap)?;
    let a = sys.a().to_dense();
    let b = sys.b_dense();
    let rhs = -(b * b.transpose());
    let op = KroneckerOperator::lyapunov(a.as_ref());
    let p = unvec(op.solve(vec_of(rhs.as_ref()).as_ref())?.as_ref(), n);
    let scale = p.norm_l2().max(1.0);
    let asym = (&p - p.transpose()).norm_l2() / scale;
    if asym > limits.asymmetry_tol {
        return Err(LyapError::OracleCheck(format!("solution asymmetry {asym:.3e}")));
    }
    let p = symmetrize(p.as_ref());
    let eigs = p
        .self_adjoint_eigenvalues(Side::Lower)
        .map_err(|e| LyapError::EigenSolver(format!("{e:?}")))?;
    let smallest = eigs.first().copied().unwrap_or(0.0);
    if smallest < -limits.psd_tol * scale {
        return Err(LyapError::OracleCheck(format!(
            "solution is not positive semidefinite: smallest eigenvalue {smallest:.3e}"
        )));
    }
    Ok(p)
}

pub fn eig_closed_form(sys: &StableSystem) -> Result<Mat<f64>> {
    eig_closed_form_with(sys, &OracleLimits::default())
}

/// `P = V (-C o (R R^H)) V^H` with `A V = V D` and `R = V^{-1} B`.
pub fn eig_closed_form_with(sys: &StableSystem, limits: &OracleLimits) -> Result<Mat<f64>> {
    let n = sys.n();
    check_cap("eigendecomposition closed form", n, limits.kron_cap)?;
    let a = sys.a().to_dense();
    let evd = a.eigen().map_err(|e| LyapError::EigenSolver(format!("{e:?}")))?;
    let v = evd.U().to_owned();
    let values: Vec<c64> = (0..n).map(|i| evd.S()[i]).collect();
    let cond = condition_number(v.as_ref())?;
    if !(cond <= limits.eigvec_cond_limit) {
        return Err(LyapError::NearDefective {
            cond,
            limit: limits.eigvec_cond_limit,
        });
    }
    let c = cauchy_core(&values)?;
    let bc = to_complex(sys.b_dense());
    let r = v.partial_piv_lu().solve(bc.as_ref());
    let rr = &r * r.adjoint();
    let x = Mat::from_fn(n, n, |i, j| -(c[(i, j)] * rr[(i, j)]));
    let p = &v * &x * v.adjoint();
    Ok(symmetrize(real_part(p.as_ref()).as_ref()))
}

pub fn iteration_matrix_radius(a: &MatrixHandle, sigma: ShiftParameter) -> Result<f64> {
    iteration_matrix_radius_with(a, sigma, &OracleLimits::default())
}

/// Spectral radius of `-(A + sigma I) (x) (A - sigma I)^{-1}`, assembled densely.
pub fn iteration_matrix_radius_with(a: &MatrixHandle, sigma: ShiftParameter, limits: &OracleLimits) -> Result<f64> {
    if !a.is_square() {
        return Err(LyapError::NotSquare {
            rows: a.rows(),
            cols: a.cols(),
        });
    }
    let n = a.rows();
    check_cap("iteration matrix", n, limits.radius_cap)?;
    let s = sigma.value();
    let ad = a.to_dense();
    let minus = Mat::from_fn(n, n, |i, j| ad[(i, j)] - if i == j { s } else { 0.0 });
    let plus = Mat::from_fn(n, n, |i, j| -(ad[(i, j)] + if i == j { s } else { 0.0 }));
    let inv = minus.partial_piv_lu().inverse();
    let g = kron(plus.as_ref(), inv.as_ref());
    let eigs = g.eigenvalues().map_err(|e| LyapError::EigenSolver(format!("{e:?}")))?;
    Ok(eigs.iter().map(|z| z.norm()).fold(0.0, f64::max))
}
