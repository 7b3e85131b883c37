//! Starting iterates from an approximate invariant subspace of `A`.
//!
//! If `B = V R` with `A V = V D` (`D` diagonal), then `P = V X V^H` solves the
//! Lyapunov equation exactly for `X = -C o (R R^H)`, where
//! `C[i][j] = 1 / (lambda_i + conj(lambda_j))` and `o` is the entrywise
//! product. When `B` is only close to `span(V)`, `R` is taken by least
//! squares and the result is a good, not exact, start.

use faer::linalg::solvers::{Solve, SolveLstsq};
use faer::{c64, Mat, MatRef};

use crate::error::{LyapError, Result};
use crate::linalg::{arnoldi, condition_number, max_abs_imag, real_part, to_complex};
use crate::matrix::MatrixHandle;
use crate::solver::{FactoredIterate, Sign, Term};

/// Eigenvector approximations of `A` with their eigenvalues.
#[derive(Debug, Clone)]
pub struct EigenBasis {
    vectors: Mat<c64>,
    values: Vec<c64>,
    partner: Vec<Option<usize>>,
    closed_under_conjugation: bool,
}

/// Default relative eigen-residual accepted for a basis column.
pub const DEFAULT_BASIS_TOL: f64 = 1e-8;

fn complex_mul(a: &MatrixHandle, v: MatRef<'_, c64>) -> Mat<c64> {
    let re = Mat::from_fn(v.nrows(), v.ncols(), |i, j| v[(i, j)].re);
    let im = Mat::from_fn(v.nrows(), v.ncols(), |i, j| v[(i, j)].im);
    let are = a.mul_dense(re.as_ref());
    let aim = a.mul_dense(im.as_ref());
    Mat::from_fn(v.nrows(), v.ncols(), |i, j| c64::new(are[(i, j)], aim[(i, j)]))
}

fn col_norm(v: MatRef<'_, c64>, j: usize) -> f64 {
    (0..v.nrows()).map(|i| v[(i, j)].norm_sqr()).sum::<f64>().sqrt()
}

impl EigenBasis {
    /// Validates `||A v_j - lambda_j v_j|| <= basis_tol ||A||_F ||v_j||` for every column
    /// and detects whether the set is closed under conjugation.
    pub fn new(a: &MatrixHandle, vectors: Mat<c64>, values: Vec<c64>, basis_tol: f64) -> Result<Self> {
        let n = a.rows();
        if vectors.nrows() != n || vectors.ncols() != values.len() {
            return Err(LyapError::Dimension(format!(
                "basis is {}x{} with {} eigenvalues for A of order {n}",
                vectors.nrows(),
                vectors.ncols(),
                values.len()
            )));
        }
        let anorm = a.frobenius_norm();
        let av = complex_mul(a, vectors.as_ref());
        for (j, &lam) in values.iter().enumerate() {
            let vn = col_norm(vectors.as_ref(), j);
            if vn == 0.0 {
                return Err(LyapError::RankDeficientBasis {
                    rank: 0,
                    k: values.len(),
                });
            }
            let res = (0..n)
                .map(|i| (av[(i, j)] - lam * vectors[(i, j)]).norm_sqr())
                .sum::<f64>()
                .sqrt();
            if res > basis_tol * anorm * vn {
                return Err(LyapError::EigenSolver(format!(
                    "column {j} (lambda = {:.6}{:+.6}i) has eigen-residual {:.3e} above {basis_tol:.1e} * ||A|| ||v||",
                    lam.re,
                    lam.im,
                    res / (anorm * vn)
                )));
            }
        }
        let partner = pair_conjugates(vectors.as_ref(), &values);
        let closed_under_conjugation = values
            .iter()
            .zip(&partner)
            .enumerate()
            .all(|(j, (lam, p))| p.is_some() || is_real_column(vectors.as_ref(), j, *lam));
        Ok(Self {
            vectors,
            values,
            partner,
            closed_under_conjugation,
        })
    }

    pub fn k(&self) -> usize {
        self.values.len()
    }

    pub fn vectors(&self) -> MatRef<'_, c64> {
        self.vectors.as_ref()
    }

    pub fn values(&self) -> &[c64] {
        &self.values
    }

    pub fn closed_under_conjugation(&self) -> bool {
        self.closed_under_conjugation
    }

    /// Real columns `S` and complex `T` with `V = S T`.
    fn real_packaging(&self) -> (Mat<f64>, Mat<c64>) {
        let n = self.vectors.nrows();
        let k = self.k();
        let v = self.vectors.as_ref();
        let mut cols: Vec<Vec<f64>> = Vec::new();
        let mut t_entries: Vec<(usize, usize, c64)> = Vec::new();
        let mut done = vec![false; k];
        for j in 0..k {
            if done[j] {
                continue;
            }
            done[j] = true;
            let re: Vec<f64> = (0..n).map(|i| v[(i, j)].re).collect();
            if is_real_column(v, j, self.values[j]) {
                t_entries.push((cols.len(), j, c64::new(1.0, 0.0)));
                cols.push(re);
                continue;
            }
            let im: Vec<f64> = (0..n).map(|i| v[(i, j)].im).collect();
            let (a, b) = (cols.len(), cols.len() + 1);
            cols.push(re);
            cols.push(im);
            t_entries.push((a, j, c64::new(1.0, 0.0)));
            t_entries.push((b, j, c64::new(0.0, 1.0)));
            if let Some(l) = self.partner[j] {
                done[l] = true;
                t_entries.push((a, l, c64::new(1.0, 0.0)));
                t_entries.push((b, l, c64::new(0.0, -1.0)));
            }
        }
        let s = Mat::from_fn(n, cols.len(), |i, c| cols[c][i]);
        let mut t = Mat::<c64>::zeros(cols.len(), k);
        for (r, c, val) in t_entries {
            t[(r, c)] = val;
        }
        (s, t)
    }
}

fn is_real_column(v: MatRef<'_, c64>, j: usize, lam: c64) -> bool {
    let vn = col_norm(v, j);
    let imn = (0..v.nrows()).map(|i| v[(i, j)].im.powi(2)).sum::<f64>().sqrt();
    lam.im == 0.0 && imn <= 1e-14 * vn
}

fn pair_conjugates(v: MatRef<'_, c64>, values: &[c64]) -> Vec<Option<usize>> {
    let k = values.len();
    let mut partner = vec![None; k];
    for j in 0..k {
        if partner[j].is_some() || values[j].im == 0.0 {
            continue;
        }
        for l in (j + 1)..k {
            if partner[l].is_some() {
                continue;
            }
            let lam_ok = (values[l] - values[j].conj()).norm() <= 1e-12 * values[j].norm().max(1.0);
            if !lam_ok {
                continue;
            }
            let diff = (0..v.nrows())
                .map(|i| (v[(i, l)] - v[(i, j)].conj()).norm_sqr())
                .sum::<f64>()
                .sqrt();
            if diff <= 1e-12 * col_norm(v, j) {
                partner[j] = Some(l);
                partner[l] = Some(j);
                break;
            }
        }
    }
    partner
}

/// `C[i][j] = 1 / (lambda_i + conj(lambda_j))`.
pub fn cauchy_core(values: &[c64]) -> Result<Mat<c64>> {
    if let Some(z) = values.iter().find(|z| !(z.re < 0.0)) {
        return Err(LyapError::Unstable { re: z.re, im: z.im });
    }
    let k = values.len();
    Ok(Mat::from_fn(k, k, |i, j| (values[i] + values[j].conj()).inv()))
}

#[derive(Debug, Clone)]
pub struct WarmStartResult {
    /// Homogeneous-chain iterate representing `P_0`.
    pub start: FactoredIterate,
    /// `||B - V R||_F`.
    pub projection_residual: f64,
    /// The `k x k` core `X`.
    pub core: Mat<c64>,
}

/// Builds `P_0 = V X V^H` with `R` from least squares `V R ~ B`.
pub fn warm_start(basis: &EigenBasis, b: &MatrixHandle) -> Result<WarmStartResult> {
    let n = basis.vectors.nrows();
    if b.rows() != n {
        return Err(LyapError::Dimension(format!(
            "B has {} rows but the basis has {n}",
            b.rows()
        )));
    }
    let k = basis.k();
    let v = basis.vectors.as_ref();
    let sv = v
        .singular_values()
        .map_err(|e| LyapError::Numeric(format!("basis svd failed: {e:?}")))?;
    let smax = sv.first().copied().unwrap_or(0.0);
    let rank = sv.iter().filter(|&&s| s > 1e-10 * smax).count();
    if rank < k {
        return Err(LyapError::RankDeficientBasis { rank, k });
    }

    let bd = b.to_dense();
    let bc = to_complex(bd.as_ref());
    let r = v.qr().solve_lstsq(bc.as_ref());
    let vr = v * &r;
    let projection_residual = (0..bd.ncols())
        .flat_map(|j| (0..n).map(move |i| (i, j)))
        .map(|(i, j)| (c64::new(bd[(i, j)], 0.0) - vr[(i, j)]).norm_sqr())
        .sum::<f64>()
        .sqrt();

    let c = cauchy_core(&basis.values)?;
    let rr = &r * r.adjoint();
    let core = Mat::from_fn(k, k, |i, j| -(c[(i, j)] * rr[(i, j)]));

    let (s, t) = basis.real_packaging();
    let y = &t * &core * t.adjoint();
    debug_assert!(!basis.closed_under_conjugation || max_abs_imag(y.as_ref()) <= 1e-8 * y.norm_l2().max(1e-300));
    let yr = real_part(y.as_ref());
    let yr = Mat::from_fn(yr.nrows(), yr.ncols(), |i, j| 0.5 * (yr[(i, j)] + yr[(j, i)]));

    let start = if yr.norm_l2() == 0.0 {
        FactoredIterate::empty(n)
    } else {
        FactoredIterate::homogeneous(Term::new(&s * &yr, s, Sign::Plus)?)?
    };
    Ok(WarmStartResult {
        start,
        projection_residual,
        core,
    })
}

#[derive(Debug, Clone)]
pub struct SelectOptions {
    /// Candidates requested per wanted eigenpair when the full spectrum is
    /// not available or its eigenvectors are ill conditioned.
    pub candidate_factor: usize,
    /// Largest eigenvector condition number for which candidates are ranked
    /// by their coefficients in the eigen-expansion of `B`.
    pub cond_limit: f64,
    /// Largest `n` handled by the dense eigensolver; above it shift-invert Arnoldi is used.
    pub dense_cap: usize,
    pub basis_tol: f64,
    pub krylov_max: usize,
}

impl Default for SelectOptions {
    fn default() -> Self {
        Self {
            candidate_factor: 3,
            cond_limit: 1e8,
            dense_cap: 500,
            basis_tol: DEFAULT_BASIS_TOL,
            krylov_max: 400,
        }
    }
}

/// A real eigenvector, or one member of a conjugate pair (`im` present, `Im lambda > 0`).
#[derive(Debug, Clone)]
struct Candidate {
    value: c64,
    re: Vec<f64>,
    im: Option<Vec<f64>>,
    /// Weight of this eigenpair in the eigen-expansion of `B`, when known.
    score: Option<f64>,
}

impl Candidate {
    fn count(&self) -> usize {
        if self.im.is_some() {
            2
        } else {
            1
        }
    }

    fn columns(&self) -> Vec<&[f64]> {
        let mut out = vec![self.re.as_slice()];
        if let Some(im) = &self.im {
            out.push(im.as_slice());
        }
        out
    }
}

/// Groups eigenpairs into real candidates and conjugate-pair candidates.
fn candidates_from(values: &[c64], vectors: MatRef<'_, c64>, scores: Option<&[f64]>) -> Vec<Candidate> {
    let n = vectors.nrows();
    let mut out = Vec::new();
    for (j, &lam) in values.iter().enumerate() {
        let scale = lam.norm().max(f64::MIN_POSITIVE);
        if lam.im.abs() <= 1e-12 * scale {
            // rotate so the largest entry is real, then keep the real part
            let (imax, _) = (0..n)
                .map(|i| (i, vectors[(i, j)].norm()))
                .fold((0, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
            let pivot = vectors[(imax, j)];
            let phase = if pivot.norm() > 0.0 { pivot.conj() / pivot.norm() } else { c64::new(1.0, 0.0) };
            out.push(Candidate {
                value: c64::new(lam.re, 0.0),
                re: (0..n).map(|i| (vectors[(i, j)] * phase).re).collect(),
                im: None,
                score: scores.map(|s| s[j]),
            });
        } else if lam.im > 0.0 {
            out.push(Candidate {
                value: lam,
                re: (0..n).map(|i| vectors[(i, j)].re).collect(),
                im: Some((0..n).map(|i| vectors[(i, j)].im).collect()),
                // the conjugate partner carries the same weight for real B
                score: scores.map(|s| 2.0 * s[j]),
            });
        }
    }
    out
}

/// Candidates from a full dense eigendecomposition.
///
/// When the eigenvectors are well conditioned every eigenpair is scored by
/// its coefficient in the expansion `B = V C`, which identifies an invariant
/// subspace containing `B` exactly. Otherwise the pool falls back to the
/// eigenpairs of smallest magnitude and largest real part.
fn dense_candidates(a: &MatrixHandle, b: MatRef<'_, f64>, want: usize, cond_limit: f64) -> Result<Vec<Candidate>> {
    let evd = a
        .to_dense()
        .eigen()
        .map_err(|e| LyapError::EigenSolver(format!("{e:?}")))?;
    let n = a.rows();
    let values: Vec<c64> = (0..n).map(|i| evd.S()[i]).collect();
    let v = evd.U();
    if condition_number(v)? <= cond_limit {
        let coeffs = v.partial_piv_lu().solve(to_complex(b));
        let scores: Vec<f64> = (0..n)
            .map(|j| {
                let row: f64 = (0..coeffs.ncols()).map(|c| coeffs[(j, c)].norm_sqr()).sum();
                let col: f64 = (0..n).map(|i| v[(i, j)].norm_sqr()).sum();
                (row * col).sqrt()
            })
            .collect();
        let mut all = candidates_from(&values, v, Some(&scores));
        all.sort_by(|x, y| y.score.unwrap_or(0.0).total_cmp(&x.score.unwrap_or(0.0)));
        return Ok(all);
    }
    let all = candidates_from(&values, v, None);

    // interleave smallest magnitude and largest real part
    let mut by_mag: Vec<usize> = (0..all.len()).collect();
    by_mag.sort_by(|&i, &j| all[i].value.norm().total_cmp(&all[j].value.norm()));
    let mut by_real: Vec<usize> = (0..all.len()).collect();
    by_real.sort_by(|&i, &j| all[j].value.re.total_cmp(&all[i].value.re));
    let mut taken = vec![false; all.len()];
    let mut pool = Vec::new();
    let mut count = 0;
    let mut streams = [by_mag.into_iter(), by_real.into_iter()];
    let mut turn = 0;
    while count < want {
        let mut progressed = false;
        for _ in 0..2 {
            let stream = &mut streams[turn % 2];
            turn += 1;
            if let Some(idx) = stream.by_ref().find(|&i| !taken[i]) {
                taken[idx] = true;
                count += all[idx].count();
                pool.push(all[idx].clone());
                progressed = true;
                break;
            }
        }
        if !progressed {
            break;
        }
    }
    Ok(pool)
}

fn shift_invert_candidates(a: &MatrixHandle, want: usize, opts: &SelectOptions) -> Result<Vec<Candidate>> {
    let n = a.rows();
    let lu = a
        .shifted_sparse(0.0)?
        .sp_lu()
        .map_err(|e| LyapError::Singular(format!("LU of A failed: {e:?}")))?;
    let anorm = a.frobenius_norm();
    let start: Vec<f64> = (0..n).map(|i| 1.0 + ((i * 7919) % 101) as f64 / 101.0).collect();
    let mut dim = (4 * want + 20).max(60);
    loop {
        let dim_now = dim.min(n).min(opts.krylov_max);
        let ritz = arnoldi(n, dim_now, &start, true, |x, y| {
            let rhs = MatRef::from_column_major_slice(x, n, 1);
            let sol = lu.solve(rhs);
            for (i, yi) in y.iter_mut().enumerate() {
                *yi = sol[(i, 0)];
            }
            Ok(())
        })?;
        let vectors = ritz.vectors.expect("requested vectors");
        let values: Vec<c64> = ritz.values.iter().map(|t| t.inv()).collect();
        let av = complex_mul(a, vectors.as_ref());
        let mut good: Vec<usize> = (0..values.len())
            .filter(|&j| {
                let vn = col_norm(vectors.as_ref(), j);
                let res = (0..n)
                    .map(|i| (av[(i, j)] - values[j] * vectors[(i, j)]).norm_sqr())
                    .sum::<f64>()
                    .sqrt();
                values[j].re.is_finite() && res <= 0.1 * opts.basis_tol * anorm * vn
            })
            .collect();
        good.sort_by(|&i, &j| values[i].norm().total_cmp(&values[j].norm()));
        let sel_vals: Vec<c64> = good.iter().map(|&j| values[j]).collect();
        let sel_vecs = Mat::from_fn(n, good.len(), |i, c| vectors[(i, good[c])]);
        let cands = candidates_from(&sel_vals, sel_vecs.as_ref(), None);
        let count: usize = cands.iter().map(Candidate::count).sum();
        if count >= want || dim_now >= n || dim_now >= opts.krylov_max {
            if count == 0 {
                return Err(LyapError::EigenSolver(format!(
                    "no Ritz pair converged in {dim_now} shift-invert Arnoldi steps"
                )));
            }
            let mut out = Vec::new();
            let mut c = 0;
            for cand in cands {
                if c >= want {
                    break;
                }
                c += cand.count();
                out.push(cand);
            }
            return Ok(out);
        }
        dim *= 2;
    }
}

fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

/// Orthonormalizes `cols` against `basis` (two passes); drops dependent columns.
fn extend_orthonormal(basis: &[Vec<f64>], cols: &[&[f64]]) -> Option<Vec<Vec<f64>>> {
    let mut fresh: Vec<Vec<f64>> = Vec::new();
    for c in cols {
        let mut v = c.to_vec();
        let norm0 = dot(&v, &v).sqrt();
        for _ in 0..2 {
            for q in basis.iter().chain(fresh.iter()) {
                let d = dot(q, &v);
                for (vi, qi) in v.iter_mut().zip(q) {
                    *vi -= d * qi;
                }
            }
        }
        let norm = dot(&v, &v).sqrt();
        if !(norm > 1e-10 * norm0) {
            return None;
        }
        v.iter_mut().for_each(|x| *x /= norm);
        fresh.push(v);
    }
    Some(fresh)
}

pub fn select_eigenpairs(a: &MatrixHandle, b: &MatrixHandle, k: usize) -> Result<EigenBasis> {
    select_eigenpairs_with(a, b, k, &SelectOptions::default())
}

/// Picks eigenpairs whose span best captures `B`.
///
/// Candidates come from the eigensolver (smallest magnitude and largest
/// real part); units are added greedily by residual reduction, conjugate
/// pairs together, until at least `k` eigenpairs are chosen.
pub fn select_eigenpairs_with(a: &MatrixHandle, b: &MatrixHandle, k: usize, opts: &SelectOptions) -> Result<EigenBasis> {
    let n = a.rows();
    if !a.is_square() {
        return Err(LyapError::NotSquare {
            rows: a.rows(),
            cols: a.cols(),
        });
    }
    if k == 0 || k > n {
        return Err(LyapError::InvalidArgument(format!("k must lie in 1..={n}, got {k}")));
    }
    if b.rows() != n {
        return Err(LyapError::Dimension(format!("B has {} rows, A has {n}", b.rows())));
    }
    let want = (opts.candidate_factor.max(1) * k).min(n);
    let bd = b.to_dense();
    let pool = if n <= opts.dense_cap {
        dense_candidates(a, bd.as_ref(), want, opts.cond_limit)?
    } else {
        shift_invert_candidates(a, want, opts)?
    };

    let mut resid: Vec<Vec<f64>> = (0..bd.ncols()).map(|j| (0..n).map(|i| bd[(i, j)]).collect()).collect();
    let mut basis: Vec<Vec<f64>> = Vec::new();
    let mut chosen: Vec<usize> = Vec::new();
    let mut usable = vec![true; pool.len()];
    let mut count = 0;
    while count < k {
        let mut best: Option<(usize, f64, Vec<Vec<f64>>)> = None;
        for (idx, cand) in pool.iter().enumerate() {
            if !usable[idx] || chosen.contains(&idx) {
                continue;
            }
            let Some(fresh) = extend_orthonormal(&basis, &cand.columns()) else {
                usable[idx] = false;
                continue;
            };
            let gain: f64 = cand.score.unwrap_or_else(|| {
                fresh
                    .iter()
                    .map(|q| resid.iter().map(|r| dot(q, r).powi(2)).sum::<f64>())
                    .sum()
            });
            let better = match &best {
                None => true,
                Some((_, g, _)) => gain > *g * (1.0 + 1e-10) + 1e-300,
            };
            if better {
                best = Some((idx, gain, fresh));
            }
        }
        let Some((idx, _, fresh)) = best else {
            return Err(LyapError::EigenSolver(format!(
                "only {count} independent eigenpairs available, {k} requested"
            )));
        };
        for q in &fresh {
            for r in resid.iter_mut() {
                let d = dot(q, r);
                for (ri, qi) in r.iter_mut().zip(q) {
                    *ri -= d * qi;
                }
            }
        }
        basis.extend(fresh);
        count += pool[idx].count();
        chosen.push(idx);
    }

    let mut values = Vec::new();
    let mut cols: Vec<Vec<c64>> = Vec::new();
    for &idx in &chosen {
        let cand = &pool[idx];
        match &cand.im {
            None => {
                values.push(cand.value);
                cols.push(cand.re.iter().map(|&x| c64::new(x, 0.0)).collect());
            }
            Some(im) => {
                values.push(cand.value);
                cols.push(cand.re.iter().zip(im).map(|(&r, &i)| c64::new(r, i)).collect());
                values.push(cand.value.conj());
                cols.push(cand.re.iter().zip(im).map(|(&r, &i)| c64::new(r, -i)).collect());
            }
        }
    }
    let vectors = Mat::from_fn(n, cols.len(), |i, j| cols[j][i]);
    EigenBasis::new(a, vectors, values, opts.basis_tol)
}
