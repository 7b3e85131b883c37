//! Seeded test problems shared by the acceptance suite, the CLI self test,
//! and the benchmarks.

use faer::linalg::solvers::DenseSolveCore;
use faer::{c64, Mat};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::Result;
use crate::matrix::{MatrixHandle, StableSystem};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Mat<f64> {
    Mat::from_fn(rows, cols, |_, _| rng.sample::<f64, _>(StandardNormal))
}

/// `A = Q - c I` with Gaussian `Q / sqrt(n)` and `c` one unit past its spectral abscissa.
pub fn random_stable_system(n: usize, p: usize, rng: &mut ChaCha8Rng) -> Result<StableSystem> {
    let scale = 1.0 / (n as f64).sqrt();
    let q = gaussian(rng, n, n) * faer::Scale(scale);
    let abscissa = q
        .eigenvalues()
        .map_err(|e| crate::error::LyapError::EigenSolver(format!("{e:?}")))?
        .iter()
        .map(|z| z.re)
        .fold(f64::NEG_INFINITY, f64::max);
    let c = abscissa + 1.0;
    let a = Mat::from_fn(n, n, |i, j| q[(i, j)] - if i == j { c } else { 0.0 });
    let b = gaussian(rng, n, p);
    StableSystem::from_dense(a, b)
}

/// A conjugate-closed list of `n` eigenvalues with real parts in `[-10, -0.1]`.
pub fn random_stable_spectrum(n: usize, rng: &mut ChaCha8Rng) -> Vec<c64> {
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let re: f64 = -rng.random_range(0.1..10.0);
        if out.len() + 2 <= n && rng.random_bool(0.5) {
            let im = rng.random_range(0.0..10.0);
            out.push(c64::new(re, im));
            out.push(c64::new(re, -im));
        } else {
            out.push(c64::new(re, 0.0));
        }
    }
    out
}

/// Like [`random_stable_spectrum`] but inside the cone `|Im| <= slope |Re|`.
pub fn cone_spectrum(n: usize, slope: f64, rng: &mut ChaCha8Rng) -> Vec<c64> {
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let re: f64 = -rng.random_range(0.01..10.0);
        if out.len() + 2 <= n && rng.random_bool(0.6) {
            let im = rng.random_range(0.0..=1.0) * slope * re.abs();
            out.push(c64::new(re, im));
            out.push(c64::new(re, -im));
        } else {
            out.push(c64::new(re, 0.0));
        }
    }
    out
}

/// Real block-diagonal form of a conjugate-closed spectrum, listed pair by pair.
pub fn real_block_diagonal(eigs: &[c64]) -> Mat<f64> {
    let n = eigs.len();
    let mut d = Mat::zeros(n, n);
    let mut i = 0;
    while i < n {
        let z = eigs[i];
        if z.im != 0.0 && i + 1 < n {
            d[(i, i)] = z.re;
            d[(i + 1, i + 1)] = z.re;
            d[(i, i + 1)] = z.im;
            d[(i + 1, i)] = -z.im;
            i += 2;
        } else {
            d[(i, i)] = z.re;
            i += 1;
        }
    }
    d
}

/// `A = S D S^{-1}` with `D` the real block form of `eigs` and a
/// well-conditioned similarity `S = I + 0.3 G / sqrt(n)`.
pub fn system_with_spectrum(eigs: &[c64], p: usize, rng: &mut ChaCha8Rng) -> Result<StableSystem> {
    let n = eigs.len();
    let d = real_block_diagonal(eigs);
    let g = gaussian(rng, n, n);
    let s = Mat::from_fn(n, n, |i, j| (if i == j { 1.0 } else { 0.0 }) + 0.3 * g[(i, j)] / (n as f64).sqrt());
    let s_inv = s.partial_piv_lu().inverse();
    let a = &s * &d * &s_inv;
    let b = gaussian(rng, n, p);
    StableSystem::from_dense(a, b)
}

/// Sparse, strictly diagonally dominant `A` with negative diagonal.
///
/// Off-diagonal entries fall within `bandwidth` of the diagonal, so LU fill
/// stays bounded; every Gershgorin disc lies in the left half plane.
pub fn sparse_banded_system(
    n: usize,
    nnz_per_row: usize,
    bandwidth: usize,
    p: usize,
    rng: &mut ChaCha8Rng,
) -> Result<StableSystem> {
    let mut entries = Vec::with_capacity(n * nnz_per_row);
    let off = nnz_per_row.saturating_sub(1);
    for i in 0..n {
        let mut row_sum = 0.0;
        for _ in 0..off {
            let delta = rng.random_range(1..=bandwidth.max(1)) as isize;
            let j = if rng.random_bool(0.5) { i as isize + delta } else { i as isize - delta };
            if j < 0 || j >= n as isize {
                continue;
            }
            let v: f64 = rng.sample::<f64, _>(StandardNormal);
            row_sum += v.abs();
            entries.push((i, j as usize, v));
        }
        entries.push((i, i, -(row_sum + rng.random_range(0.5..1.5))));
    }
    let a = MatrixHandle::from_triplets(n, n, entries)?;
    let b = MatrixHandle::from_dense(gaussian(rng, n, p));
    StableSystem::new(a, b)
}
