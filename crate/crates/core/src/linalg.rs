//! Small dense helpers and an Arnoldi eigenvalue estimator.

use faer::{c64, Mat, MatRef};

use crate::error::{LyapError, Result};

/// Concatenates blocks with equal row counts side by side.
pub fn hstack(nrows: usize, blocks: &[MatRef<'_, f64>]) -> Mat<f64> {
    let ncols = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = Mat::zeros(nrows, ncols);
    let mut offset = 0;
    for b in blocks {
        assert_eq!(b.nrows(), nrows, "hstack: row mismatch");
        out.as_mut()
            .submatrix_mut(0, offset, nrows, b.ncols())
            .copy_from(b);
        offset += b.ncols();
    }
    out
}

/// Thin QR `m = Q R` with `Q` of width `min(nrows, ncols)`.
pub fn thin_qr(m: MatRef<'_, f64>) -> (Mat<f64>, Mat<f64>) {
    let (nr, nc) = (m.nrows(), m.ncols());
    if nr == 0 || nc == 0 {
        return (Mat::zeros(nr, 0), Mat::zeros(0, nc));
    }
    let qr = m.qr();
    let q = qr.compute_thin_Q();
    let r = qr.thin_R().to_owned();
    (q, r)
}

/// `||L R^T||_F` without forming the product.
///
/// Both factors are reduced by QR first so the result keeps full relative
/// accuracy even when the product is much smaller than the factors.
pub fn product_fnorm(l: MatRef<'_, f64>, r: MatRef<'_, f64>) -> f64 {
    assert_eq!(l.ncols(), r.ncols(), "product_fnorm: column mismatch");
    if l.ncols() == 0 {
        return 0.0;
    }
    let (_, rl) = thin_qr(l);
    let (_, rr) = thin_qr(r);
    (&rl * rr.transpose()).norm_l2()
}

pub fn to_complex(m: MatRef<'_, f64>) -> Mat<c64> {
    Mat::from_fn(m.nrows(), m.ncols(), |i, j| c64::new(m[(i, j)], 0.0))
}

pub fn real_part(m: MatRef<'_, c64>) -> Mat<f64> {
    Mat::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)].re)
}

pub fn max_abs_imag(m: MatRef<'_, c64>) -> f64 {
    let mut worst = 0.0f64;
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            worst = worst.max(m[(i, j)].im.abs());
        }
    }
    worst
}

/// `(m + m^T) / 2`.
pub fn symmetrize(m: MatRef<'_, f64>) -> Mat<f64> {
    Mat::from_fn(m.nrows(), m.ncols(), |i, j| 0.5 * (m[(i, j)] + m[(j, i)]))
}

/// Ratio of extreme singular values, or infinity for a numerically zero matrix.
pub fn condition_number(m: MatRef<'_, c64>) -> Result<f64> {
    let s = m
        .singular_values()
        .map_err(|e| LyapError::Numeric(format!("svd failed: {e:?}")))?;
    let max = s.first().copied().unwrap_or(0.0);
    let min = s.last().copied().unwrap_or(0.0);
    if min == 0.0 {
        Ok(f64::INFINITY)
    } else {
        Ok(max / min)
    }
}

/// Result of an Arnoldi run: Ritz values and their residual estimates.
#[derive(Debug, Clone)]
pub struct RitzPairs {
    pub values: Vec<c64>,
    /// `|h_{m+1,m}| |e_m^T y|` per Ritz value, with unit-norm `y`.
    pub residuals: Vec<f64>,
    /// Ritz vectors `V_m y` (n x m, complex), present when requested.
    pub vectors: Option<Mat<c64>>,
    /// True when the Krylov space became invariant.
    pub invariant: bool,
}

/// Arnoldi with full reorthogonalization on a linear operator.
///
/// `apply` writes `op(x)` into `y`. Ritz pairs come from the eigensolve of the
/// `m x m` Hessenberg matrix.
pub fn arnoldi(
    n: usize,
    dim: usize,
    start: &[f64],
    want_vectors: bool,
    mut apply: impl FnMut(&[f64], &mut [f64]) -> Result<()>,
) -> Result<RitzPairs> {
    let dim = dim.min(n).max(1);
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(dim + 1);
    let mut h = Mat::<f64>::zeros(dim + 1, dim);

    let norm0 = start.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm0 == 0.0 || !norm0.is_finite() {
        return Err(LyapError::EigenSolver("zero or non-finite start vector".into()));
    }
    basis.push(start.iter().map(|v| v / norm0).collect());

    let mut m = 0;
    let mut invariant = false;
    let mut w = vec![0.0; n];
    while m < dim {
        apply(&basis[m], &mut w)?;
        if w.iter().any(|v| !v.is_finite()) {
            return Err(LyapError::EigenSolver("operator produced non-finite values".into()));
        }
        let wnorm_before = w.iter().map(|v| v * v).sum::<f64>().sqrt();
        // two passes of classical Gram-Schmidt
        for _ in 0..2 {
            for (k, q) in basis.iter().enumerate() {
                let dot: f64 = q.iter().zip(&w).map(|(a, b)| a * b).sum();
                h[(k, m)] += dot;
                for (wi, qi) in w.iter_mut().zip(q) {
                    *wi -= dot * qi;
                }
            }
        }
        let wnorm = w.iter().map(|v| v * v).sum::<f64>().sqrt();
        h[(m + 1, m)] = wnorm;
        m += 1;
        if wnorm <= 1e-13 * wnorm_before.max(f64::MIN_POSITIVE) || wnorm == 0.0 {
            invariant = true;
            break;
        }
        if m < dim {
            basis.push(w.iter().map(|v| v / wnorm).collect());
        }
    }

    let hm = h.as_ref().submatrix(0, 0, m, m).to_owned();
    let beta = h[(m, m - 1)];
    let evd = hm
        .eigen()
        .map_err(|e| LyapError::EigenSolver(format!("Hessenberg eigensolve failed: {e:?}")))?;
    let y = evd.U();
    let s = evd.S();
    let mut values = Vec::with_capacity(m);
    let mut residuals = Vec::with_capacity(m);
    for j in 0..m {
        values.push(s[j]);
        let ynorm = (0..m).map(|i| y[(i, j)].norm_sqr()).sum::<f64>().sqrt();
        let last = y[(m - 1, j)].norm() / ynorm.max(f64::MIN_POSITIVE);
        residuals.push(if invariant { 0.0 } else { beta * last });
    }
    let vectors = want_vectors.then(|| {
        let mut out = Mat::<c64>::zeros(n, m);
        for j in 0..m {
            for (k, q) in basis.iter().take(m).enumerate() {
                let coef = y[(k, j)];
                for i in 0..n {
                    out[(i, j)] += coef * q[i];
                }
            }
        }
        out
    });
    Ok(RitzPairs {
        values,
        residuals,
        vectors,
        invariant,
    })
}
