use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::factorization::ShiftedFactorization;
use super::iterate::{advance_in_place, cold_start, compress, residual_fnorm, seed_from_start, symmetrized, FactoredIterate};
use crate::error::{LyapError, Result};
use crate::matrix::StableSystem;
use crate::spectral::ShiftParameter;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Tol,
    MaxIters,
    Diverged,
}

impl Termination {
    pub fn as_str(self) -> &'static str {
        match self {
            Termination::Tol => "tol",
            Termination::MaxIters => "max_iters",
            Termination::Diverged => "diverged",
        }
    }
}

/// Window length of the divergence detector.
pub const DIVERGENCE_WINDOW: usize = 5;
/// Growth over the window that counts as divergence.
pub const DIVERGENCE_FACTOR: f64 = 10.0;
/// Window length of the stagnation detector.
pub const STALL_WINDOW: usize = 25;
/// Minimum relative improvement of the best residual across one stall window.
pub const STALL_IMPROVEMENT: f64 = 1e-3;
/// Relative residual below which stagnation is attributed to roundoff, not to
/// a non-contracting shift.
pub const STALL_FLOOR: f64 = 1e-6;
/// Residual ratios averaged into the observed rate.
pub const RATE_WINDOW: usize = 10;

#[derive(Debug, Clone)]
pub struct RunOptions {
    /// Relative residual target `||R||_F / ||B B^T||_F`.
    pub tol: f64,
    pub max_iters: usize,
    /// Compress every this many steps; 0 disables periodic compression.
    pub compress_every: usize,
    /// Truncation tolerance; `tol / 10` when unset.
    pub compress_tol: Option<f64>,
    pub start: Option<FactoredIterate>,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iters: 500,
            compress_every: 10,
            compress_tol: None,
            start: None,
        }
    }
}

impl RunOptions {
    fn compress_tol(&self) -> f64 {
        self.compress_tol.unwrap_or(self.tol / 10.0).clamp(0.0, 0.5)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub sigma: f64,
    pub iterations: usize,
    /// Absolute Frobenius residuals; entry 0 belongs to the start.
    pub residual_history: Vec<f64>,
    pub termination: Termination,
    pub observed_rate: f64,
    pub wall_time_seconds: f64,
    /// `||B B^T||_F`, the scale of the relative tolerance.
    pub rhs_norm: f64,
    /// `||P - (P + P^T)/2||_F` removed from the final iterate.
    pub symmetry_correction: f64,
    pub solves: usize,
    pub shifted_multiplies: usize,
}

impl SolveReport {
    pub fn relative_residual(&self) -> f64 {
        let last = self.residual_history.last().copied().unwrap_or(f64::NAN);
        if self.rhs_norm > 0.0 {
            last / self.rhs_norm
        } else {
            last
        }
    }
}

/// Geometric mean of the last `min(RATE_WINDOW, iterations)` residual ratios.
pub fn observed_rate(history: &[f64]) -> f64 {
    let iters = history.len().saturating_sub(1);
    let m = iters.min(RATE_WINDOW);
    if m == 0 {
        return f64::NAN;
    }
    let window = &history[history.len() - 1 - m..];
    let mut log_sum = 0.0;
    for pair in window.windows(2) {
        let (prev, cur) = (pair[0], pair[1]);
        if cur == 0.0 {
            return 0.0;
        }
        log_sum += (cur / prev).ln();
    }
    (log_sum / m as f64).exp()
}

/// Monotone growth by more than [`DIVERGENCE_FACTOR`] over the last window.
pub fn is_diverging(history: &[f64]) -> bool {
    if history.last().is_some_and(|r| !r.is_finite()) {
        return true;
    }
    if history.len() < DIVERGENCE_WINDOW + 1 {
        return false;
    }
    let window = &history[history.len() - 1 - DIVERGENCE_WINDOW..];
    let increasing = window.windows(2).all(|p| p[1] > p[0]);
    increasing && window[DIVERGENCE_WINDOW] > DIVERGENCE_FACTOR * window[0]
}

/// No meaningful progress over the last [`STALL_WINDOW`] iterations while the
/// relative residual is still far above roundoff.
///
/// This is how a contraction ratio of exactly one shows up: the residual
/// neither grows nor decays.
pub fn is_stalled(history: &[f64], rhs_norm: f64) -> bool {
    let k = history.len();
    if k < 2 * STALL_WINDOW + 1 {
        return false;
    }
    let best_before = history[..k - STALL_WINDOW].iter().copied().fold(f64::INFINITY, f64::min);
    let best_recent = history[k - STALL_WINDOW..].iter().copied().fold(f64::INFINITY, f64::min);
    let scale = if rhs_norm > 0.0 { rhs_norm } else { 1.0 };
    best_recent > STALL_FLOOR * scale && best_recent >= (1.0 - STALL_IMPROVEMENT) * best_before
}

/// Runs the splitting iteration from `opts.start` (or zero) until the relative
/// residual reaches `opts.tol`, the iteration cap, or detected divergence or
/// stagnation.
///
/// The returned iterate is the symmetrized final `P`.
pub fn run(sys: &StableSystem, sigma: ShiftParameter, opts: RunOptions) -> Result<(FactoredIterate, SolveReport)> {
    let fact = ShiftedFactorization::new(sys.a(), sigma)?;
    run_with_factorization(sys, &fact, opts)
}

/// [`run`] with a factorization computed by the caller, e.g. shared across runs.
pub fn run_with_factorization(
    sys: &StableSystem,
    fact: &ShiftedFactorization,
    mut opts: RunOptions,
) -> Result<(FactoredIterate, SolveReport)> {
    if !(opts.tol > 0.0) {
        return Err(LyapError::InvalidArgument(format!("tol must be positive, got {}", opts.tol)));
    }
    if fact.n() != sys.n() {
        return Err(LyapError::Dimension(format!(
            "factorization order {} but system order {}",
            fact.n(),
            sys.n()
        )));
    }
    let clock = Instant::now();
    let counts_before = fact.counts();
    let a = sys.a();
    let b = sys.b();
    let rhs_norm = sys.rhs_norm();
    let threshold = opts.tol * rhs_norm;
    let ctol = opts.compress_tol();

    let start = opts.start.take();
    if let Some(s) = &start {
        if s.n() != sys.n() {
            return Err(LyapError::Dimension(format!(
                "start iterate order {} but system order {}",
                s.n(),
                sys.n()
            )));
        }
    }
    let mut state = start.unwrap_or_else(|| FactoredIterate::empty(sys.n()));
    let mut history = vec![residual_fnorm(&state, a, b)?];
    let mut termination = Termination::MaxIters;
    let mut iterations = 0;

    if history[0] <= threshold {
        termination = Termination::Tol;
    } else {
        while iterations < opts.max_iters {
            if iterations == 0 && state.frontier().is_none() {
                state = if state.columns() == 0 {
                    cold_start(sys, fact)?
                } else {
                    seed_from_start(state, sys, fact)?
                };
            } else {
                advance_in_place(&mut state, fact, a)?;
            }
            iterations += 1;
            if opts.compress_every > 0 && iterations % opts.compress_every == 0 {
                state = compress(&state, ctol)?;
            }
            let r = residual_fnorm(&state, a, b)?;
            history.push(r);
            if r <= threshold {
                termination = Termination::Tol;
                break;
            }
            if is_diverging(&history) || is_stalled(&history, rhs_norm) {
                termination = Termination::Diverged;
                break;
            }
        }
    }

    let sym_tol = if opts.compress_every > 0 { ctol } else { 0.0 };
    let (output, symmetry_correction) = if state.is_finite() {
        symmetrized(&state, sym_tol)?
    } else {
        (state, f64::NAN)
    };
    let counts = fact.counts();
    let report = SolveReport {
        sigma: fact.sigma().value(),
        iterations,
        observed_rate: observed_rate(&history),
        residual_history: history,
        termination,
        wall_time_seconds: clock.elapsed().as_secs_f64(),
        rhs_norm,
        symmetry_correction,
        solves: counts.solves - counts_before.solves,
        shifted_multiplies: counts.shifted_multiplies - counts_before.shifted_multiplies,
    };
    Ok((output, report))
}

#[cfg(test)]
mod tests {
    use faer::Mat;

    use super::*;

    fn scalar(a: f64, b: f64) -> StableSystem {
        StableSystem::from_dense(Mat::from_fn(1, 1, |_, _| a), Mat::from_fn(1, 1, |_, _| b)).unwrap()
    }

    fn sigma(v: f64) -> ShiftParameter {
        ShiftParameter::new(v).unwrap()
    }

    #[test]
    fn rate_helper() {
        assert!((observed_rate(&[1.0, 0.5, 0.25]) - 0.5).abs() < 1e-15);
        assert_eq!(observed_rate(&[1.0, 0.0]), 0.0);
        assert!(observed_rate(&[1.0]).is_nan());
    }

    #[test]
    fn divergence_helper() {
        let grow: Vec<f64> = (0..6).map(|k| 2f64.powi(k)).collect();
        assert!(is_diverging(&grow));
        let slow: Vec<f64> = (0..6).map(|k| 1.5f64.powi(k)).collect();
        assert!(!is_diverging(&slow));
        assert!(is_diverging(&[1.0, f64::INFINITY]));
        let mut wiggle = grow.clone();
        wiggle[3] = 0.1;
        assert!(!is_diverging(&wiggle));
    }

    #[test]
    fn scalar_run_converges_to_quarter() {
        let sys = scalar(-2.0, 1.0);
        let opts = RunOptions {
            tol: 1e-10,
            ..RunOptions::default()
        };
        let (p, rep) = run(&sys, sigma(1.0), opts).unwrap();
        assert_eq!(rep.termination, Termination::Tol);
        assert_eq!(rep.iterations, 21);
        assert_eq!(rep.residual_history.len(), rep.iterations + 1);
        assert!((p.to_dense()[(0, 0)] - 0.25).abs() < 1e-10);
        assert!((rep.observed_rate - 1.0 / 3.0).abs() < 1e-6);
    }

    #[test]
    fn annihilating_shift_converges_in_one() {
        let (p, rep) = run(&scalar(-1.0, 1.0), sigma(1.0), RunOptions::default()).unwrap();
        assert_eq!(rep.iterations, 1);
        assert_eq!(rep.residual_history, vec![1.0, 0.0]);
        assert_eq!(rep.termination, Termination::Tol);
        assert!((p.to_dense()[(0, 0)] - 0.5).abs() < 1e-16);
    }

    #[test]
    fn boundary_shift_never_reports_tol() {
        let a = Mat::from_fn(2, 2, |i, j| if i == j { [-1.0, -3.0][i] } else { 0.0 });
        let b = Mat::from_fn(2, 1, |_, _| 1.0);
        let sys = StableSystem::from_dense(a, b).unwrap();
        let opts = RunOptions {
            max_iters: 200,
            ..RunOptions::default()
        };
        let (_, rep) = run(&sys, sigma(1.0), opts).unwrap();
        assert_ne!(rep.termination, Termination::Tol);
        // ratio exactly one: the residual plateaus and the run is stopped as stalled
        assert_eq!(rep.termination, Termination::Diverged);
        assert!(rep.iterations < 200);
    }

    #[test]
    fn stall_helper() {
        let flat = vec![1.0; 2 * STALL_WINDOW + 1];
        assert!(is_stalled(&flat, 1.0));
        assert!(!is_stalled(&flat[..2 * STALL_WINDOW], 1.0));
        // at roundoff level a plateau is not a stall
        let floor = vec![1e-14; 2 * STALL_WINDOW + 1];
        assert!(!is_stalled(&floor, 1.0));
        let slow: Vec<f64> = (0..=2 * STALL_WINDOW).map(|k| 0.99f64.powi(k as i32)).collect();
        assert!(!is_stalled(&slow, 1.0));
    }

    #[test]
    fn start_at_solution_needs_no_iterations() {
        let sys = scalar(-2.0, 1.0);
        let u = Mat::from_fn(1, 1, |_, _| 0.25);
        let w = Mat::from_fn(1, 1, |_, _| 1.0);
        let start = FactoredIterate::homogeneous(super::super::iterate::Term::new(u, w, super::super::iterate::Sign::Plus).unwrap()).unwrap();
        let opts = RunOptions {
            start: Some(start),
            ..RunOptions::default()
        };
        let (_, rep) = run(&sys, sigma(1.0), opts).unwrap();
        assert_eq!(rep.iterations, 0);
        assert_eq!(rep.termination, Termination::Tol);
    }

    #[test]
    fn nonzero_start_follows_homogeneous_recursion() {
        // P_k - 1/4 = (-1/3)^k (P_0 - 1/4) for a = -2, sigma = 1
        let sys = scalar(-2.0, 1.0);
        let p0 = 3.0;
        let start = FactoredIterate::homogeneous(
            super::super::iterate::Term::new(
                Mat::from_fn(1, 1, |_, _| p0),
                Mat::from_fn(1, 1, |_, _| 1.0),
                super::super::iterate::Sign::Plus,
            )
            .unwrap(),
        )
        .unwrap();
        let opts = RunOptions {
            start: Some(start),
            max_iters: 4,
            tol: 1e-300,
            compress_every: 0,
            ..RunOptions::default()
        };
        let (p, rep) = run(&sys, sigma(1.0), opts).unwrap();
        assert_eq!(rep.iterations, 4);
        let want = 0.25 + (-1.0f64 / 3.0).powi(4) * (p0 - 0.25);
        assert!((p.to_dense()[(0, 0)] - want).abs() < 1e-15);
        // both chains share one solve and one multiply per step
        assert_eq!(rep.solves, 4);
        assert_eq!(rep.shifted_multiplies, 4);
    }

    #[test]
    fn invalid_tolerance() {
        let opts = RunOptions {
            tol: 0.0,
            ..RunOptions::default()
        };
        assert!(run(&scalar(-2.0, 1.0), sigma(1.0), opts).is_err());
    }
}
