//! Desk-scale self test; runs entirely in memory.

use lyapsplit::faer::Mat;
use lyapsplit::generate::{self, rng};
use lyapsplit::oracle::{eig_closed_form, iteration_matrix_radius, kron_solve};
use lyapsplit::solver::{cold_start, run, shifted_factorize, step, RunOptions, Termination};
use lyapsplit::spectral::{
    convergence_ratio, heuristic_sigma, min_convergent_sigma, summarize, SpectrumInfo, SummaryMode, DEFAULT_CONE_SLOPE,
};
use lyapsplit::{Result, ShiftParameter, StableSystem};
use rand::Rng;

pub struct Check {
    pub name: &'static str,
    pub pass: bool,
    pub detail: String,
}

/// `a = -2, b = 1, sigma = 1`: `P_k - 1/4 = -(1/4) (-1/3)^k`.
fn scalar_series(corrupt_sign: bool) -> Result<(bool, String)> {
    let sys = StableSystem::from_dense(Mat::from_fn(1, 1, |_, _| -2.0), Mat::from_fn(1, 1, |_, _| 1.0))?;
    let fact = shifted_factorize(sys.a(), ShiftParameter::new(1.0)?)?;
    let mut state = cold_start(&sys, &fact)?;
    if corrupt_sign {
        state.negate_signs();
    }
    let mut worst: f64 = 0.0;
    for k in 1..=15 {
        if k > 1 {
            state = step(&state, &fact, sys.a())?;
        }
        let want = 0.25 - 0.25 * (-1.0f64 / 3.0).powi(k);
        worst = worst.max((state.to_dense()[(0, 0)] - want).abs());
    }
    Ok((worst <= 1e-12, format!("max deviation from 1/4 - (1/4)(-1/3)^k over k=1..15: {worst:.1e}")))
}

fn oracle_agreement() -> Result<(bool, String)> {
    let mut r = rng(20);
    let sys = generate::random_stable_system(8, 2, &mut r)?;
    let spec = summarize(sys.a(), SummaryMode::Exact)?;
    let sigma = heuristic_sigma(&spec, DEFAULT_CONE_SLOPE)?;
    let (p, rep) = run(
        &sys,
        sigma,
        RunOptions {
            tol: 1e-12,
            max_iters: 2000,
            ..RunOptions::default()
        },
    )?;
    let kron = kron_solve(&sys)?;
    let closed = eig_closed_form(&sys)?;
    let rel = |x: &Mat<f64>, y: &Mat<f64>| (x - y).norm_l2() / y.norm_l2();
    let (e_iter, e_closed) = (rel(&p.to_dense(), &kron), rel(&closed, &kron));
    let radius_gap = (convergence_ratio(&spec, sigma)? - iteration_matrix_radius(sys.a(), sigma)?).abs();
    let pass = rep.termination == Termination::Tol && e_iter <= 1e-7 && e_closed <= 1e-7 && radius_gap <= 1e-10;
    Ok((
        pass,
        format!(
            "n=8: iteration vs Kronecker {e_iter:.1e}, eigen closed form vs Kronecker {e_closed:.1e}, ratio vs radius {radius_gap:.1e}"
        ),
    ))
}

fn ratio_bound_sample() -> Result<(bool, String)> {
    let mut r = rng(21);
    let mut mismatches = 0;
    for _ in 0..100 {
        let n = r.random_range(1..=10);
        let spec = SpectrumInfo::full(generate::random_stable_spectrum(n, &mut r));
        let smin = min_convergent_sigma(&spec)?;
        let s = if smin > 0.0 && r.random_bool(0.7) {
            smin * r.random_range(0.2..2.0)
        } else {
            r.random_range(0.01..20.0)
        };
        if smin > 0.0 && (s / smin - 1.0).abs() <= 1e-9 {
            continue;
        }
        if (convergence_ratio(&spec, ShiftParameter::new(s)?)? < 1.0) != (s > smin) {
            mismatches += 1;
        }
    }
    Ok((mismatches == 0, format!("100 spectra, {mismatches} disagreements between ratio < 1 and sigma > bound")))
}

type CheckFn = Box<dyn Fn() -> Result<(bool, String)>>;

pub fn run_all(corrupt_sign: bool) -> Vec<Check> {
    let checks: [(&'static str, CheckFn); 3] = [
        ("scalar series", Box::new(move || scalar_series(corrupt_sign))),
        ("oracle agreement", Box::new(oracle_agreement)),
        ("ratio/bound equivalence", Box::new(ratio_bound_sample)),
    ];
    checks
        .into_iter()
        .map(|(name, f)| {
            let (pass, detail) = f().unwrap_or_else(|e| (false, format!("error: {e}")));
            Check { name, pass, detail }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_checks_pass() {
        for c in run_all(false) {
            assert!(c.pass, "{}: {}", c.name, c.detail);
        }
    }

    #[test]
    fn corrupted_sign_fails_scalar_series_only() {
        let checks = run_all(true);
        assert!(!checks[0].pass);
        assert!(checks[1..].iter().all(|c| c.pass));
    }
}
