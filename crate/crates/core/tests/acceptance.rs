//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any failure.

use std::time::{Duration, Instant};

use faer::Mat;
use rand::Rng;

use lyapsplit::generate::{self, rng};
use lyapsplit::oracle::{eig_closed_form, iteration_matrix_radius, kron_solve};
use lyapsplit::solver::{cold_start, compress, residual_fnorm, run, shifted_factorize, step, RunOptions, Termination};
use lyapsplit::spectral::{
    convergence_ratio, heuristic_sigma, min_convergent_sigma, summarize, ShiftParameter, SpectrumInfo, SummaryMode,
    DEFAULT_CONE_SLOPE,
};
use lyapsplit::warmstart::{select_eigenpairs, warm_start};
use lyapsplit::{Result, StableSystem};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Result<Outcome> {
    Ok(Outcome {
        pass,
        detail: detail.into(),
    })
}

fn sigma(v: f64) -> ShiftParameter {
    ShiftParameter::new(v).expect("positive shift")
}

fn rel_err(got: &Mat<f64>, want: &Mat<f64>) -> f64 {
    (got - want).norm_l2() / want.norm_l2()
}

fn scalar_system(a: f64, b: f64) -> StableSystem {
    StableSystem::from_dense(Mat::from_fn(1, 1, |_, _| a), Mat::from_fn(1, 1, |_, _| b)).unwrap()
}

fn scalar_closed_form() -> Result<Outcome> {
    let sys = scalar_system(-2.0, 1.0);
    let fact = shifted_factorize(sys.a(), sigma(1.0))?;
    let mut state = cold_start(&sys, &fact)?;
    let mut worst: f64 = 0.0;
    for k in 1..=15 {
        if k > 1 {
            state = step(&state, &fact, sys.a())?;
        }
        let err = state.to_dense()[(0, 0)] - 0.25;
        worst = worst.max((err.abs() - 0.25 * 3f64.powi(-k)).abs());
    }
    let clock = Instant::now();
    let (_, rep) = run(
        &sys,
        sigma(1.0),
        RunOptions {
            tol: 1e-10,
            ..RunOptions::default()
        },
    )?;
    let elapsed = clock.elapsed();
    let pass = worst <= 1e-12
        && rep.termination == Termination::Tol
        && (20..=22).contains(&rep.iterations)
        && elapsed < Duration::from_millis(100);
    outcome(
        pass,
        format!(
            "max |err - 3^-k/4| = {worst:.1e}, {} iterations to 1e-10 ({}), {:.1} ms",
            rep.iterations,
            rep.termination.as_str(),
            elapsed.as_secs_f64() * 1e3
        ),
    )
}

fn oracle_equivalence() -> Result<Outcome> {
    let mut r = rng(2);
    let clock = Instant::now();
    let mut worst: f64 = 0.0;
    let mut failures = 0;
    for _ in 0..50 {
        let n = r.random_range(2..=25);
        let p = r.random_range(1..=3);
        let sys = generate::random_stable_system(n, p, &mut r)?;
        let spec = summarize(sys.a(), SummaryMode::Exact)?;
        let s = heuristic_sigma(&spec, DEFAULT_CONE_SLOPE)?;
        let (p_iter, rep) = run(
            &sys,
            s,
            RunOptions {
                tol: 1e-12,
                max_iters: 5000,
                ..RunOptions::default()
            },
        )?;
        let err = rel_err(&p_iter.to_dense(), &kron_solve(&sys)?);
        worst = worst.max(err);
        if err > 1e-7 || rep.termination != Termination::Tol {
            failures += 1;
        }
    }
    let elapsed = clock.elapsed();
    outcome(
        failures == 0 && elapsed < Duration::from_secs(30),
        format!(
            "50 systems, worst relative error {worst:.1e}, {failures} failures, {:.2} s",
            elapsed.as_secs_f64()
        ),
    )
}

fn ratio_bound_equivalence() -> Result<Outcome> {
    let mut r = rng(3);
    let mut mismatches = 0;
    let mut both_sides = [0usize; 2];
    let mut worst_at_bound: f64 = 0.0;
    for _ in 0..200 {
        let n = r.random_range(1..=12);
        let spec = SpectrumInfo::full(generate::random_stable_spectrum(n, &mut r));
        let smin = min_convergent_sigma(&spec)?;
        let s = loop {
            let candidate = if smin > 0.0 && r.random_bool(0.7) {
                smin * r.random_range(0.2..2.0)
            } else {
                r.random_range(0.01..20.0)
            };
            if smin == 0.0 || (candidate / smin - 1.0).abs() > 1e-9 {
                break candidate;
            }
        };
        let rho = convergence_ratio(&spec, sigma(s))?;
        let converges = s > smin;
        both_sides[converges as usize] += 1;
        if (rho < 1.0) != converges {
            mismatches += 1;
        }
        if smin > 0.0 {
            worst_at_bound = worst_at_bound.max((convergence_ratio(&spec, sigma(smin))? - 1.0).abs());
        }
    }
    outcome(
        mismatches == 0 && worst_at_bound <= 1e-12,
        format!(
            "200 spectra ({} below / {} above the bound), {mismatches} mismatches, max |rho(sigma_min) - 1| = {worst_at_bound:.1e}",
            both_sides[0], both_sides[1]
        ),
    )
}

fn iteration_matrix_validation() -> Result<Outcome> {
    let mut r = rng(4);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let n = r.random_range(1..=8);
        let sys = generate::random_stable_system(n, 1, &mut r)?;
        let spec = summarize(sys.a(), SummaryMode::Exact)?;
        let s = sigma(r.random_range(0.1..5.0));
        let diff = (convergence_ratio(&spec, s)? - iteration_matrix_radius(sys.a(), s)?).abs();
        worst = worst.max(diff);
    }
    outcome(worst <= 1e-10, format!("20 systems, max |ratio - radius| = {worst:.1e}"))
}

fn necessity_and_divergence() -> Result<Outcome> {
    let sys = StableSystem::from_dense(
        Mat::from_fn(2, 2, |i, j| if i != j { 0.0 } else if i == 0 { -1.0 } else { -3.0 }),
        Mat::from_fn(2, 1, |_, _| 1.0),
    )?;
    let opts = RunOptions {
        tol: 1e-10,
        max_iters: 300,
        ..RunOptions::default()
    };
    let (_, at_bound) = run(&sys, sigma(1.0), opts.clone())?;
    let (_, below) = run(&sys, sigma(0.5), opts)?;
    let pass = at_bound.termination != Termination::Tol
        && below.termination == Termination::Diverged
        && below.iterations <= 50;
    outcome(
        pass,
        format!(
            "sigma=1: {} after {} iterations; sigma=0.5: {} after {} iterations",
            at_bound.termination.as_str(),
            at_bound.iterations,
            below.termination.as_str(),
            below.iterations
        ),
    )
}

/// A shift on a log grid whose predicted ratio is closest to `target`.
fn shift_for_ratio(spec: &SpectrumInfo, target: f64, range: (f64, f64)) -> Result<Option<(ShiftParameter, f64)>> {
    let mut best: Option<(ShiftParameter, f64)> = None;
    for i in 0..400 {
        let s = sigma(10f64.powf(-2.0 + 4.0 * i as f64 / 399.0));
        let rho = convergence_ratio(spec, s)?;
        if rho < range.0 || rho > range.1 {
            continue;
        }
        if best.is_none_or(|(_, b)| (rho - target).abs() < (b - target).abs()) {
            best = Some((s, rho));
        }
    }
    Ok(best)
}

fn rate_law() -> Result<Outcome> {
    let mut r = rng(6);
    let mut tested = 0;
    let mut worst: f64 = 0.0;
    let mut attempts = 0;
    while tested < 20 && attempts < 200 {
        attempts += 1;
        let n = r.random_range(2..=20);
        let p = r.random_range(1..=3);
        let sys = generate::random_stable_system(n, p, &mut r)?;
        let spec = summarize(sys.a(), SummaryMode::Exact)?;
        let Some((s, rho)) = shift_for_ratio(&spec, 0.75, (0.6, 0.9))? else {
            continue;
        };
        let (_, rep) = run(
            &sys,
            s,
            RunOptions {
                tol: 1e-300,
                max_iters: 40,
                compress_every: 0,
                ..RunOptions::default()
            },
        )?;
        let rel = (rep.observed_rate / rho - 1.0).abs();
        worst = worst.max(rel);
        tested += 1;
    }
    outcome(
        tested == 20 && worst <= 0.15,
        format!("{tested} systems (rho in [0.6, 0.9], 40 iterations), max |observed/rho - 1| = {worst:.3}"),
    )
}

/// A system whose `B` lies in the span of eigenvectors belonging to `k` chosen eigenvalues.
fn system_in_eigenspace(n: usize, k: usize, p: usize, r: &mut rand_chacha::ChaCha8Rng) -> Result<(StableSystem, usize)> {
    let eigs = generate::random_stable_spectrum(n, r);
    let d = generate::real_block_diagonal(&eigs);
    let g = generate::gaussian(r, n, n);
    let s = Mat::from_fn(n, n, |i, j| (if i == j { 1.0 } else { 0.0 }) + 0.3 * g[(i, j)] / (n as f64).sqrt());
    use faer::linalg::solvers::DenseSolveCore;
    let a = &s * &d * s.partial_piv_lu().inverse();

    // whole real-block units, so the span is a real invariant subspace
    let mut units = Vec::new();
    let mut i = 0;
    while i < n {
        let w = if eigs[i].im != 0.0 { 2 } else { 1 };
        units.push((i, w));
        i += w;
    }
    let mut cols = Vec::new();
    while cols.len() < k {
        let (start, w) = units.remove(r.random_range(0..units.len()));
        if cols.len() + w > k {
            if units.iter().all(|&(_, w2)| cols.len() + w2 > k) {
                break;
            }
            units.push((start, w));
            continue;
        }
        cols.extend(start..start + w);
    }
    let coef = generate::gaussian(r, cols.len(), p);
    let basis = Mat::from_fn(n, cols.len(), |i, j| s[(i, cols[j])]);
    let b = &basis * &coef;
    Ok((StableSystem::from_dense(a, b)?, cols.len()))
}

fn warm_start_exactness() -> Result<Outcome> {
    let mut r = rng(7);
    let mut worst_start: f64 = 0.0;
    let mut worst_closed: f64 = 0.0;
    let mut closed_cases = 0;
    for _ in 0..30 {
        let n = r.random_range(6..=30);
        let k = r.random_range(1..=5);
        let p = r.random_range(1..=2);
        let (sys, dim) = system_in_eigenspace(n, k, p, &mut r)?;
        let basis = select_eigenpairs(sys.a(), sys.b(), dim)?;
        let ws = warm_start(&basis, sys.b())?;
        let res = residual_fnorm(&ws.start, sys.a(), sys.b())? / sys.rhs_norm();
        worst_start = worst_start.max(res);
        if n <= 20 {
            closed_cases += 1;
            worst_closed = worst_closed.max(rel_err(&eig_closed_form(&sys)?, &kron_solve(&sys)?));
        }
    }
    outcome(
        worst_start <= 1e-8 && worst_closed <= 1e-8,
        format!(
            "30 systems, max start residual / ||BB^T|| = {worst_start:.1e}; full-basis vs Kronecker on {closed_cases} systems: {worst_closed:.1e}"
        ),
    )
}

fn cone_heuristic_soundness() -> Result<Outcome> {
    let mut r = rng(8);
    let mut violations = 0;
    let mut min_margin = f64::INFINITY;
    for _ in 0..200 {
        let n = r.random_range(1..=12);
        let spec = SpectrumInfo::full(generate::cone_spectrum(n, DEFAULT_CONE_SLOPE, &mut r));
        let h = heuristic_sigma(&spec, DEFAULT_CONE_SLOPE)?.value();
        let smin = min_convergent_sigma(&spec)?;
        if h < smin {
            violations += 1;
        }
        if smin > 0.0 {
            min_margin = min_margin.min(h / smin);
        }
    }
    outcome(
        violations == 0,
        format!("200 cone spectra, {violations} violations, min heuristic / bound = {min_margin:.3}"),
    )
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    xs[xs.len() / 2]
}

fn cost_contract() -> Result<Outcome> {
    let mut r = rng(9);
    let sys = generate::sparse_banded_system(10_000, 5, 50, 2, &mut r)?;
    let spec = summarize(sys.a(), SummaryMode::Estimated)?;
    let s = heuristic_sigma(&spec, DEFAULT_CONE_SLOPE)?;
    let fact = shifted_factorize(sys.a(), s)?;

    // per-step operation counts, cold and warm
    let cold = cold_start(&sys, &fact)?;
    let before = fact.counts();
    let next = step(&cold, &fact, sys.a())?;
    let after = fact.counts();
    let cold_pair = (after.solves - before.solves, after.shifted_multiplies - before.shifted_multiplies);
    let warm_basis = select_eigenpairs(sys.a(), sys.b(), 2)?;
    let warm = warm_start(&warm_basis, sys.b())?;
    let (_, warm_rep) = lyapsplit::solver::run_with_factorization(
        &sys,
        &fact,
        RunOptions {
            tol: 1e-300,
            max_iters: 5,
            start: Some(warm.start),
            ..RunOptions::default()
        },
    )?;

    // timing: one step against one solve with the same block width
    let b = sys.b_dense().to_owned();
    let solve_times: Vec<f64> = (0..15)
        .map(|_| {
            let t = Instant::now();
            std::hint::black_box(fact.solve(b.as_ref()).unwrap());
            t.elapsed().as_secs_f64()
        })
        .collect();
    let step_times: Vec<f64> = (0..15)
        .map(|_| {
            let t = Instant::now();
            std::hint::black_box(step(&next, &fact, sys.a()).unwrap());
            t.elapsed().as_secs_f64()
        })
        .collect();
    let (t_solve, t_step) = (median(solve_times), median(step_times));

    let (_, rep) = lyapsplit::solver::run_with_factorization(
        &sys,
        &fact,
        RunOptions {
            tol: 1e-300,
            max_iters: 100,
            ..RunOptions::default()
        },
    )?;
    let counts_ok = cold_pair == (1, 1)
        && rep.solves == rep.iterations
        && rep.shifted_multiplies + 1 == rep.iterations
        && warm_rep.solves == warm_rep.iterations
        && warm_rep.shifted_multiplies == warm_rep.iterations;
    let pass = counts_ok && t_step <= 5.0 * t_solve && rep.iterations == 100 && rep.wall_time_seconds <= 60.0;
    outcome(
        pass,
        format!(
            "n=10000 nnz={}: step {:.2} ms vs solve {:.2} ms ({:.2}x); 100 iterations: {} solves, {} multiplies, {:.1} s; warm {} iterations: {} solves, {} multiplies",
            sys.a().nnz(),
            t_step * 1e3,
            t_solve * 1e3,
            t_step / t_solve,
            rep.solves,
            rep.shifted_multiplies,
            rep.wall_time_seconds,
            warm_rep.iterations,
            warm_rep.solves,
            warm_rep.shifted_multiplies
        ),
    )
}

fn compression_safety() -> Result<Outcome> {
    let mut r = rng(10);
    let mut worst: f64 = 0.0;
    let mut merged = 0;
    for case in 0..20 {
        let n = r.random_range(3..=25);
        let p = r.random_range(1..=3);
        let sys = generate::random_stable_system(n, p, &mut r)?;
        let (state, _) = {
            let fact = shifted_factorize(sys.a(), sigma(r.random_range(1.0..4.0)))?;
            let mut st = cold_start(&sys, &fact)?;
            for _ in 0..r.random_range(3..15) {
                st = step(&st, &fact, sys.a())?;
            }
            (st, ())
        };
        let rel_tol = [1e-2, 1e-4, 1e-6, 1e-9][case % 4];
        let before = state.to_dense();
        let after = compress(&state, rel_tol)?;
        if after.blocks().len() <= 1 {
            merged += 1;
        }
        let ratio = (&after.to_dense() - &before).norm_l2() / (rel_tol * before.norm_l2());
        worst = worst.max(ratio);
    }
    outcome(
        worst <= 1.0,
        format!("20 cases ({merged} merged to one block), max ||dP|| / (rel_tol ||P||) = {worst:.3}"),
    )
}

type Criterion = (&'static str, fn() -> Result<Outcome>);

fn main() {
    let criteria: [Criterion; 10] = [
        ("scalar closed form", scalar_closed_form),
        ("oracle equivalence", oracle_equivalence),
        ("ratio < 1 iff sigma above bound", ratio_bound_equivalence),
        ("iteration matrix radius", iteration_matrix_validation),
        ("necessity and divergence", necessity_and_divergence),
        ("rate law", rate_law),
        ("warm start exactness", warm_start_exactness),
        ("cone heuristic soundness", cone_heuristic_soundness),
        ("cost contract", cost_contract),
        ("compression safety", compression_safety),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let (pass, detail) = match check() {
            Ok(o) => (o.pass, o.detail),
            Err(e) => (false, format!("error: {e}")),
        };
        if !pass {
            failed += 1;
        }
        println!("criterion {:>2} {:<34} {}  {}", i + 1, name, if pass { "PASS" } else { "FAIL" }, detail);
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
