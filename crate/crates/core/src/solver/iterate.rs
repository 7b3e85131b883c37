use faer::{Mat, MatRef};
use serde::{Deserialize, Serialize};

use super::factorization::ShiftedFactorization;
use crate::error::{LyapError, Result};
use crate::linalg::{hstack, product_fnorm, thin_qr};
use crate::matrix::{MatrixHandle, StableSystem};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sign {
    #[serde(rename = "+1")]
    Plus,
    #[serde(rename = "-1")]
    Minus,
}

impl Sign {
    pub fn value(self) -> f64 {
        match self {
            Sign::Plus => 1.0,
            Sign::Minus => -1.0,
        }
    }

    pub fn flipped(self) -> Self {
        match self {
            Sign::Plus => Sign::Minus,
            Sign::Minus => Sign::Plus,
        }
    }

    pub fn from_value(v: f64) -> Option<Self> {
        if v == 1.0 {
            Some(Sign::Plus)
        } else if v == -1.0 {
            Some(Sign::Minus)
        } else {
            None
        }
    }
}

/// One signed low-rank term `sign * U W^T`.
#[derive(Debug, Clone, PartialEq)]
pub struct Term {
    pub u: Mat<f64>,
    pub w: Mat<f64>,
    pub sign: Sign,
}

impl Term {
    pub fn new(u: Mat<f64>, w: Mat<f64>, sign: Sign) -> Result<Self> {
        if u.nrows() != w.nrows() || u.ncols() != w.ncols() {
            return Err(LyapError::Dimension(format!(
                "term factors must match: U is {}x{}, W is {}x{}",
                u.nrows(),
                u.ncols(),
                w.nrows(),
                w.ncols()
            )));
        }
        Ok(Self { u, w, sign })
    }

    pub fn width(&self) -> usize {
        self.u.ncols()
    }

    fn signed_u(&self) -> Mat<f64> {
        match self.sign {
            Sign::Plus => self.u.clone(),
            Sign::Minus => -&self.u,
        }
    }

    /// Rescales `u` and `w` by reciprocal powers of two so their norms match.
    ///
    /// Each step shrinks `u` by roughly `1 / |lambda - sigma|` and grows `w` by
    /// `|lambda + sigma|`; without rebalancing the factors eventually
    /// underflow and overflow even though their product stays bounded. Powers
    /// of two keep the rescaling exact.
    fn balance(&mut self) {
        let (nu, nw) = (self.u.norm_l2(), self.w.norm_l2());
        if !(nu > 0.0 && nw > 0.0 && nu.is_finite() && nw.is_finite()) {
            return;
        }
        let e = (0.5 * (nw.log2() - nu.log2())).round() as i32;
        if e != 0 {
            let c = 2f64.powi(e);
            self.u *= faer::Scale(c);
            self.w *= faer::Scale(1.0 / c);
        }
    }

    fn is_finite(&self) -> bool {
        let finite = |m: &Mat<f64>| (0..m.ncols()).all(|j| (0..m.nrows()).all(|i| m[(i, j)].is_finite()));
        finite(&self.u) && finite(&self.w)
    }
}

/// Applies `X -> -(A - sigma I)^{-1} X (A + sigma I)^T` to several terms with
/// one multi-column solve and one multi-column shifted multiply.
fn advance_all(terms: &[&Term], fact: &ShiftedFactorization, a: &MatrixHandle) -> Result<Vec<Term>> {
    let n = fact.n();
    let us: Vec<_> = terms.iter().map(|t| t.u.as_ref()).collect();
    let ws: Vec<_> = terms.iter().map(|t| t.w.as_ref()).collect();
    let u = fact.solve(hstack(n, &us).as_ref())?;
    let w = fact.shifted_multiply(a, hstack(n, &ws).as_ref())?;
    let mut offset = 0;
    Ok(terms
        .iter()
        .map(|t| {
            let k = t.width();
            let mut out = Term {
                u: u.subcols(offset, k).to_owned(),
                w: w.subcols(offset, k).to_owned(),
                sign: t.sign.flipped(),
            };
            offset += k;
            out.balance();
            out
        })
        .collect())
}

/// `P = hom + sum_i s_i U_i W_i^T`, stored as thin factors.
///
/// `frontier` is the most recent term of the `B` chain. It is already part of
/// `blocks`; it is kept separately so compression can merge `blocks` freely
/// while the chain can still be extended. `hom` carries the image of a
/// nonzero start under the homogeneous recursion and is advanced every step.
#[derive(Debug, Clone, PartialEq)]
pub struct FactoredIterate {
    n: usize,
    blocks: Vec<Term>,
    hom: Option<Term>,
    frontier: Option<Term>,
}

impl FactoredIterate {
    /// The zero matrix of order `n`.
    pub fn empty(n: usize) -> Self {
        Self {
            n,
            blocks: Vec::new(),
            hom: None,
            frontier: None,
        }
    }

    pub fn from_parts(n: usize, blocks: Vec<Term>, hom: Option<Term>, frontier: Option<Term>) -> Result<Self> {
        for t in blocks.iter().chain(hom.iter()).chain(frontier.iter()) {
            if t.u.nrows() != n || t.w.nrows() != n || t.u.ncols() != t.w.ncols() {
                return Err(LyapError::Dimension(format!(
                    "term of shape {}x{} / {}x{} in an iterate of order {n}",
                    t.u.nrows(),
                    t.u.ncols(),
                    t.w.nrows(),
                    t.w.ncols()
                )));
            }
        }
        Ok(Self {
            n,
            blocks,
            hom,
            frontier,
        })
    }

    /// An iterate made of a homogeneous chain only.
    pub fn homogeneous(hom: Term) -> Result<Self> {
        let n = hom.u.nrows();
        Self::from_parts(n, Vec::new(), Some(hom), None)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn blocks(&self) -> &[Term] {
        &self.blocks
    }

    pub fn hom(&self) -> Option<&Term> {
        self.hom.as_ref()
    }

    pub fn frontier(&self) -> Option<&Term> {
        self.frontier.as_ref()
    }

    /// Total factor width over blocks and the homogeneous chain.
    pub fn columns(&self) -> usize {
        self.blocks.iter().map(Term::width).sum::<usize>() + self.hom.as_ref().map_or(0, Term::width)
    }

    pub fn is_finite(&self) -> bool {
        self.blocks
            .iter()
            .chain(self.hom.iter())
            .chain(self.frontier.iter())
            .all(Term::is_finite)
    }

    /// All represented terms stacked as `(U S, W)` so that `P = (U S) W^T`.
    pub fn stacked(&self) -> (Mat<f64>, Mat<f64>) {
        let terms: Vec<&Term> = self.hom.iter().chain(self.blocks.iter()).collect();
        let us: Vec<Mat<f64>> = terms.iter().map(|t| t.signed_u()).collect();
        let u_refs: Vec<MatRef<'_, f64>> = us.iter().map(|m| m.as_ref()).collect();
        let w_refs: Vec<MatRef<'_, f64>> = terms.iter().map(|t| t.w.as_ref()).collect();
        (hstack(self.n, &u_refs), hstack(self.n, &w_refs))
    }

    /// The represented `n x n` matrix. Only for small `n`.
    pub fn to_dense(&self) -> Mat<f64> {
        let (u, w) = self.stacked();
        if u.ncols() == 0 {
            return Mat::zeros(self.n, self.n);
        }
        &u * w.transpose()
    }

    /// Folds every represented term into the homogeneous chain.
    ///
    /// Used when an arbitrary matrix serves as the start of a run: its
    /// evolution under the iteration is purely homogeneous.
    pub fn into_homogeneous(self) -> Self {
        if self.blocks.is_empty() {
            return Self {
                frontier: None,
                ..self
            };
        }
        let n = self.n;
        let (u, w) = self.stacked();
        Self {
            n,
            blocks: Vec::new(),
            hom: Some(Term {
                u,
                w,
                sign: Sign::Plus,
            }),
            frontier: None,
        }
    }

    /// Negates every stored sign.
    ///
    /// Negating the `B` chain turns the recursion's signs into the other
    /// parity. Exposed for negative-control self tests.
    #[doc(hidden)]
    pub fn negate_signs(&mut self) {
        for t in self.blocks.iter_mut().chain(self.hom.iter_mut()).chain(self.frontier.iter_mut()) {
            t.sign = t.sign.flipped();
        }
    }
}

/// First iterate from `P_0 = 0`: `P_1 = -(A - sigma I)^{-1} B B^T`.
pub fn cold_start(sys: &StableSystem, fact: &ShiftedFactorization) -> Result<FactoredIterate> {
    if sys.n() != fact.n() {
        return Err(LyapError::Dimension(format!(
            "system order {} but factorization order {}",
            sys.n(),
            fact.n()
        )));
    }
    let b = sys.b_dense();
    let term = Term {
        u: fact.solve(b)?,
        w: b.to_owned(),
        sign: Sign::Minus,
    };
    FactoredIterate::from_parts(sys.n(), vec![term.clone()], None, Some(term))
}

/// One splitting step `P <- -(A - sigma I)^{-1} P (A + sigma I)^T + P_1`.
///
/// Appends the next term of the `B` chain and advances the homogeneous chain
/// when present, with one multi-column solve and one multi-column shifted
/// multiply in total.
pub fn step(state: &FactoredIterate, fact: &ShiftedFactorization, a: &MatrixHandle) -> Result<FactoredIterate> {
    let mut next = state.clone();
    advance_in_place(&mut next, fact, a)?;
    Ok(next)
}

pub(crate) fn advance_in_place(state: &mut FactoredIterate, fact: &ShiftedFactorization, a: &MatrixHandle) -> Result<()> {
    if state.n != fact.n() || a.rows() != state.n {
        return Err(LyapError::Dimension(format!(
            "iterate order {}, factorization order {}, A is {}x{}",
            state.n,
            fact.n(),
            a.rows(),
            a.cols()
        )));
    }
    if state.frontier.is_none() && state.hom.is_none() {
        return Err(LyapError::InvalidIterate(
            "iterate has neither a B chain nor a homogeneous chain to advance".into(),
        ));
    }
    let terms: Vec<&Term> = state.frontier.iter().chain(state.hom.iter()).collect();
    let mut next = advance_all(&terms, fact, a)?.into_iter();
    if state.frontier.is_some() {
        let front = next.next().expect("one advanced term per input");
        state.blocks.push(front.clone());
        state.frontier = Some(front);
    }
    if state.hom.is_some() {
        state.hom = next.next();
    }
    Ok(())
}

/// Advances the homogeneous part of a start and seeds the `B` chain.
///
/// This is the first step from an arbitrary `P_0` folded into `hom`.
pub(crate) fn seed_from_start(
    start: FactoredIterate,
    sys: &StableSystem,
    fact: &ShiftedFactorization,
) -> Result<FactoredIterate> {
    let Some(h) = start.into_homogeneous().hom else {
        return cold_start(sys, fact);
    };
    // `P_1 = -(A - sigma I)^{-1} (B B^T + P_0 (A + sigma I)^T)`: the B
    // chain and the homogeneous chain share one solve.
    let b = sys.b_dense();
    let u = fact.solve(hstack(sys.n(), &[b, h.u.as_ref()]).as_ref())?;
    let p = b.ncols();
    let front = Term {
        u: u.subcols(0, p).to_owned(),
        w: b.to_owned(),
        sign: Sign::Minus,
    };
    let hom = Term {
        u: u.subcols(p, h.width()).to_owned(),
        w: fact.shifted_multiply(sys.a(), h.w.as_ref())?,
        sign: h.sign.flipped(),
    };
    FactoredIterate::from_parts(sys.n(), vec![front.clone()], Some(hom), Some(front))
}

/// `||A P + P A^T + B B^T||_F` without forming any `n x n` matrix.
///
/// With `P = U W^T` (signs folded into `U`) the residual is
/// `[A U, U, B] [W, A W, B]^T`, whose norm is taken through QR of both factors.
pub fn residual_fnorm(state: &FactoredIterate, a: &MatrixHandle, b: &MatrixHandle) -> Result<f64> {
    let n = state.n;
    if a.rows() != n || a.cols() != n || b.rows() != n {
        return Err(LyapError::Dimension(format!(
            "residual: iterate order {n}, A is {}x{}, B has {} rows",
            a.rows(),
            a.cols(),
            b.rows()
        )));
    }
    let b_dense;
    let b_ref = match b.as_dense() {
        Some(r) => r,
        None => {
            b_dense = b.to_dense();
            b_dense.as_ref()
        }
    };
    let (u, w) = state.stacked();
    let au = a.mul_dense(u.as_ref());
    let aw = a.mul_dense(w.as_ref());
    let left = hstack(n, &[au.as_ref(), u.as_ref(), b_ref]);
    let right = hstack(n, &[w.as_ref(), aw.as_ref(), b_ref]);
    Ok(product_fnorm(left.as_ref(), right.as_ref()))
}

/// Merges `blocks` into one term by truncated SVD of the core matrix.
///
/// Discarded singular values satisfy `sqrt(sum s_j^2) <= rel_tol * ||P_blocks||_F`,
/// so `||P_before - P_after||_F <= rel_tol ||P_before||_F` whenever the
/// homogeneous chain is absent. The homogeneous chain and the frontier are kept.
pub fn compress(state: &FactoredIterate, rel_tol: f64) -> Result<FactoredIterate> {
    if !(0.0..1.0).contains(&rel_tol) {
        return Err(LyapError::InvalidArgument(format!("rel_tol must lie in [0, 1), got {rel_tol}")));
    }
    let n = state.n;
    let blocks_only = FactoredIterate {
        n,
        blocks: state.blocks.clone(),
        hom: None,
        frontier: None,
    };
    let (u, w) = blocks_only.stacked();
    let mut out = FactoredIterate {
        n,
        blocks: Vec::new(),
        hom: state.hom.clone(),
        frontier: state.frontier.clone(),
    };
    if u.ncols() == 0 {
        return Ok(out);
    }
    let (qu, ru) = thin_qr(u.as_ref());
    let (qw, rw) = thin_qr(w.as_ref());
    let core = &ru * rw.transpose();
    let svd = core
        .thin_svd()
        .map_err(|e| LyapError::Numeric(format!("core SVD failed: {e:?}")))?;
    let s = svd.S().column_vector();
    let k = s.nrows();
    let total: f64 = (0..k).map(|j| s[j] * s[j]).sum();
    let smax = if k > 0 { s[0] } else { 0.0 };
    // singular values at roundoff level relative to the factor magnitudes are
    // always dropped, which also removes exactly cancelling terms
    let scale = smax.max(ru.norm_l2() * rw.norm_l2());
    let floor = scale * f64::EPSILON * (n.max(u.ncols()) as f64);
    let budget = (rel_tol * rel_tol) * total;
    let mut keep = k;
    let mut tail = 0.0;
    while keep > 0 {
        let sj = s[keep - 1];
        if sj <= floor || tail + sj * sj <= budget {
            tail += sj * sj;
            keep -= 1;
        } else {
            break;
        }
    }
    if keep == 0 {
        return Ok(out);
    }
    let x = svd.U().submatrix(0, 0, k, keep);
    let y = svd.V().submatrix(0, 0, k, keep);
    let mut u_new = &qu * x;
    for j in 0..keep {
        let sj = s[j];
        for i in 0..n {
            u_new[(i, j)] *= sj;
        }
    }
    let w_new = &qw * y;
    out.blocks.push(Term {
        u: u_new,
        w: w_new,
        sign: Sign::Plus,
    });
    Ok(out)
}

/// `(P + P^T) / 2` in factored form, merged with [`compress`].
pub(crate) fn symmetrized(state: &FactoredIterate, rel_tol: f64) -> Result<(FactoredIterate, f64)> {
    let n = state.n;
    let (u, w) = state.stacked();
    if u.ncols() == 0 {
        return Ok((FactoredIterate::empty(n), 0.0));
    }
    // ||P - P^T||_F / 2 = ||[U, -W] [W, U]^T||_F / 2
    let neg_w = -&w;
    let asym = 0.5 * product_fnorm(hstack(n, &[u.as_ref(), neg_w.as_ref()]).as_ref(), hstack(n, &[w.as_ref(), u.as_ref()]).as_ref());
    let half_u = &u * faer::Scale(0.5);
    let half_w = &w * faer::Scale(0.5);
    let term = Term {
        u: hstack(n, &[half_u.as_ref(), half_w.as_ref()]),
        w: hstack(n, &[w.as_ref(), u.as_ref()]),
        sign: Sign::Plus,
    };
    let merged = FactoredIterate::from_parts(n, vec![term], None, None)?;
    Ok((compress(&merged, rel_tol)?, asym))
}
