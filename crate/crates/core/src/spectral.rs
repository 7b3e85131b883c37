//! Shift selection from spectral information about `A`.
//!
//! The splitting iteration with shift `sigma` contracts by
//! `rho(sigma) = max_{i,j} |lambda_i + sigma| / |lambda_j - sigma|`. This module
//! evaluates that ratio, the exclusive lower bound on `sigma` that makes it
//! smaller than one, and a cheap damping-cone heuristic that only needs
//! extreme-value summaries.

use faer::c64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{LyapError, Result};
use crate::linalg::arnoldi;
use crate::matrix::MatrixHandle;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpectrumKind {
    Full,
    Summary,
}

/// Either the full eigenvalue list of `A` or bounds on its extremes.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumInfo {
    eigenvalues: Option<Vec<c64>>,
    spectral_radius: f64,
    max_abs_real: f64,
    max_abs_imag: f64,
}

impl SpectrumInfo {
    /// A full spectrum. The summary fields are derived from the list.
    pub fn full(eigenvalues: Vec<c64>) -> Self {
        let fold = |f: fn(&c64) -> f64| eigenvalues.iter().map(f).fold(0.0f64, f64::max);
        let spectral_radius = fold(|z| z.norm());
        let max_abs_real = fold(|z| z.re.abs());
        let max_abs_imag = fold(|z| z.im.abs());
        Self {
            eigenvalues: Some(eigenvalues),
            spectral_radius,
            max_abs_real,
            max_abs_imag,
        }
    }

    pub fn summary(spectral_radius: f64, max_abs_real: f64, max_abs_imag: f64) -> Result<Self> {
        for (name, v) in [
            ("spectral radius", spectral_radius),
            ("max |Re|", max_abs_real),
            ("max |Im|", max_abs_imag),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(LyapError::InvalidArgument(format!(
                    "{name} must be finite and nonnegative, got {v}"
                )));
            }
        }
        Ok(Self {
            eigenvalues: None,
            spectral_radius,
            max_abs_real,
            max_abs_imag,
        })
    }

    pub fn kind(&self) -> SpectrumKind {
        if self.eigenvalues.is_some() {
            SpectrumKind::Full
        } else {
            SpectrumKind::Summary
        }
    }

    pub fn eigenvalues(&self) -> Option<&[c64]> {
        self.eigenvalues.as_deref()
    }

    pub fn spectral_radius(&self) -> f64 {
        self.spectral_radius
    }

    pub fn max_abs_real(&self) -> f64 {
        self.max_abs_real
    }

    pub fn max_abs_imag(&self) -> f64 {
        self.max_abs_imag
    }

    /// Fails on the first listed eigenvalue with nonnegative real part.
    /// Summaries carry no sign information and always pass.
    pub fn check_stable(&self) -> Result<()> {
        if let Some(eigs) = &self.eigenvalues {
            if let Some(z) = eigs.iter().find(|z| !(z.re < 0.0)) {
                return Err(LyapError::Unstable { re: z.re, im: z.im });
            }
        }
        Ok(())
    }

    fn stable_eigenvalues(&self) -> Result<&[c64]> {
        let eigs = self.eigenvalues.as_deref().ok_or(LyapError::NeedsFullSpectrum)?;
        self.check_stable()?;
        Ok(eigs)
    }
}

/// A strictly positive shift.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct ShiftParameter(f64);

impl ShiftParameter {
    pub fn new(sigma: f64) -> Result<Self> {
        if sigma > 0.0 && sigma.is_finite() {
            Ok(Self(sigma))
        } else {
            Err(LyapError::NonPositiveSigma(sigma))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for ShiftParameter {
    type Error = LyapError;

    fn try_from(v: f64) -> Result<Self> {
        Self::new(v)
    }
}

impl From<ShiftParameter> for f64 {
    fn from(s: ShiftParameter) -> f64 {
        s.0
    }
}

/// Contraction ratio of the splitting iteration for a full stable spectrum.
///
/// The pair maximum separates: the largest numerator `|lambda_i + sigma|` and
/// the smallest denominator `|lambda_j - sigma|` are chosen independently.
pub fn convergence_ratio(spec: &SpectrumInfo, sigma: ShiftParameter) -> Result<f64> {
    let eigs = spec.stable_eigenvalues()?;
    let s = sigma.value();
    let num = eigs.iter().map(|z| (z + s).norm()).fold(0.0, f64::max);
    let den = eigs
        .iter()
        .map(|z| (z - s).norm())
        .fold(f64::INFINITY, f64::min);
    if eigs.is_empty() {
        return Ok(0.0);
    }
    Ok(num / den)
}

/// Exclusive lower bound on `sigma`: the ratio is below one iff `sigma > bound`.
pub fn min_convergent_sigma(spec: &SpectrumInfo) -> Result<f64> {
    let eigs = spec.stable_eigenvalues()?;
    let mut bound = 0.0f64;
    for lj in eigs {
        let mj = lj.norm_sqr();
        for li in eigs {
            // Re lambda_j + Re lambda_i < 0 for stable spectra
            let cand = (mj - li.norm_sqr()) / (2.0 * (lj.re + li.re));
            bound = bound.max(cand);
        }
    }
    Ok(bound)
}

/// Default relative margin applied above [`min_convergent_sigma`].
pub const DEFAULT_SIGMA_MARGIN: f64 = 0.05;

/// A usable shift strictly above the exclusive bound.
///
/// Returns `max(sigma_min * (1 + margin), floor)` where the floor is the
/// smallest eigenvalue modulus. The floor matters when the bound is zero,
/// for instance a single eigenvalue, where it gives one-step annihilation.
pub fn sigma_from_bound(spec: &SpectrumInfo, margin: f64) -> Result<ShiftParameter> {
    if !(margin > 0.0) {
        return Err(LyapError::InvalidArgument(format!("margin must be positive, got {margin}")));
    }
    let bound = min_convergent_sigma(spec)?;
    let eigs = spec.stable_eigenvalues()?;
    let floor = eigs.iter().map(|z| z.norm()).fold(f64::INFINITY, f64::min);
    ShiftParameter::new((bound * (1.0 + margin)).max(floor))
}

/// Default cone slope `k`: `|Im lambda| <= k |Re lambda|`, i.e. 5% damping.
pub const DEFAULT_CONE_SLOPE: f64 = 20.0;

/// Damping-cone shift `min((k+1)/2 * r, max|Re|/2 + k/2 * max|Im|)`.
///
/// Needs only the summary fields. When every eigenvalue lies inside the cone
/// of slope `k`, both terms bound the exact [`min_convergent_sigma`] from above.
pub fn heuristic_sigma(spec: &SpectrumInfo, cone_slope: f64) -> Result<ShiftParameter> {
    if !(cone_slope > 0.0 && cone_slope.is_finite()) {
        return Err(LyapError::InvalidArgument(format!(
            "cone slope must be positive, got {cone_slope}"
        )));
    }
    if !(spec.spectral_radius > 0.0) {
        return Err(LyapError::InvalidArgument("spectral radius is zero".into()));
    }
    let by_radius = 0.5 * (cone_slope + 1.0) * spec.spectral_radius;
    let by_parts = 0.5 * spec.max_abs_real + 0.5 * cone_slope * spec.max_abs_imag;
    ShiftParameter::new(by_radius.min(by_parts))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SummaryMode {
    Exact,
    Estimated,
}

#[derive(Debug, Clone)]
pub struct SummaryOptions {
    /// Largest `n` accepted by the dense eigensolver in exact mode.
    pub dense_cap: usize,
    /// Multiplier applied to every estimated summary field.
    pub safety_factor: f64,
    pub krylov_start: usize,
    pub krylov_max: usize,
    /// Ritz residual tolerance relative to `||A||_F`.
    pub ritz_tol: f64,
    pub seed: u64,
}

impl Default for SummaryOptions {
    fn default() -> Self {
        Self {
            dense_cap: 500,
            safety_factor: 1.1,
            krylov_start: 40,
            krylov_max: 320,
            ritz_tol: 1e-6,
            seed: 0x5eed_1a9e,
        }
    }
}

pub fn summarize(a: &MatrixHandle, mode: SummaryMode) -> Result<SpectrumInfo> {
    summarize_with(a, mode, &SummaryOptions::default())
}

pub fn summarize_with(a: &MatrixHandle, mode: SummaryMode, opts: &SummaryOptions) -> Result<SpectrumInfo> {
    if !a.is_square() {
        return Err(LyapError::NotSquare {
            rows: a.rows(),
            cols: a.cols(),
        });
    }
    match mode {
        SummaryMode::Exact => {
            let n = a.rows();
            if n > opts.dense_cap {
                return Err(LyapError::CapExceeded {
                    what: "exact spectrum",
                    n,
                    cap: opts.dense_cap,
                });
            }
            let eigs = a
                .to_dense()
                .eigenvalues()
                .map_err(|e| LyapError::EigenSolver(format!("{e:?}")))?;
            Ok(SpectrumInfo::full(eigs))
        }
        SummaryMode::Estimated => estimate_summary(a, opts),
    }
}

fn estimate_summary(a: &MatrixHandle, opts: &SummaryOptions) -> Result<SpectrumInfo> {
    let n = a.rows();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let start: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let anorm = a.frobenius_norm();
    if anorm == 0.0 {
        return Err(LyapError::EigenSolver("A is the zero matrix".into()));
    }
    let mut dim = opts.krylov_start.max(4);
    loop {
        let dim_now = dim.min(n);
        let ritz = arnoldi(n, dim_now, &start, false, |x, y| {
            let xm = faer::MatRef::from_column_major_slice(x, n, 1);
            let ax = a.mul_dense(xm);
            for (i, yi) in y.iter_mut().enumerate() {
                *yi = ax[(i, 0)];
            }
            Ok(())
        })?;
        let pick = |key: fn(&c64) -> f64| {
            (0..ritz.values.len())
                .max_by(|&i, &j| key(&ritz.values[i]).total_cmp(&key(&ritz.values[j])))
                .expect("nonempty Ritz set")
        };
        let targets = [pick(|z| z.norm()), pick(|z| z.re.abs()), pick(|z| z.im.abs())];
        let converged = ritz.invariant
            || targets
                .iter()
                .all(|&t| ritz.residuals[t] <= opts.ritz_tol * anorm);
        if converged {
            let f = opts.safety_factor;
            let v = &ritz.values;
            return SpectrumInfo::summary(
                f * v[targets[0]].norm(),
                f * v[targets[1]].re.abs(),
                f * v[targets[2]].im.abs(),
            );
        }
        if dim_now >= n || dim >= opts.krylov_max {
            let worst = targets.iter().map(|&t| ritz.residuals[t]).fold(0.0, f64::max);
            return Err(LyapError::EigenSolver(format!(
                "extreme Ritz values not converged after {dim_now} Arnoldi steps (residual {worst:.3e})"
            )));
        }
        dim = (dim * 2).min(opts.krylov_max);
    }
}
