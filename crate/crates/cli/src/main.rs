mod config;
mod selftest;

use std::process::ExitCode;

use clap::Parser;
use lyapsplit::faer::{self, Par};
use lyapsplit::matrix_io::{read_system, write_factors, write_report};
use lyapsplit::solver::{run, RunOptions, SolveReport, Termination};
use lyapsplit::spectral::{heuristic_sigma, sigma_from_bound, summarize, SummaryMode, DEFAULT_SIGMA_MARGIN};
use lyapsplit::warmstart::{select_eigenpairs, warm_start};
use lyapsplit::{LyapError, Result, ShiftParameter, StableSystem};

use config::{Args, RunConfig, SigmaMode};

const EXIT_ERROR: u8 = 1;

fn exit_code(termination: Termination) -> u8 {
    match termination {
        Termination::Tol => 0,
        Termination::MaxIters => 2,
        Termination::Diverged => 3,
    }
}

fn configure_threads() -> Result<()> {
    let Ok(raw) = std::env::var("LYAPSPLIT_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| LyapError::InvalidArgument(format!("LYAPSPLIT_THREADS must be a positive integer, got `{raw}`")))?;
    faer::set_global_parallelism(if n == 1 { Par::Seq } else { Par::rayon(n) });
    Ok(())
}

fn choose_sigma(cfg: &RunConfig, sys: &mut StableSystem) -> Result<ShiftParameter> {
    match cfg.sigma_mode {
        SigmaMode::Fixed(s) => Ok(s),
        SigmaMode::Auto => {
            let spec = summarize(sys.a(), SummaryMode::Estimated)?;
            heuristic_sigma(&spec, cfg.cone_slope)
        }
        SigmaMode::ExactSpectrum => {
            let spec = summarize(sys.a(), SummaryMode::Exact)?;
            sys.assert_stable(&spec)?;
            sigma_from_bound(&spec, DEFAULT_SIGMA_MARGIN)
        }
    }
}

fn solve(cfg: &RunConfig) -> Result<SolveReport> {
    let mut sys = read_system(&cfg.path_a, &cfg.path_b)?;
    let sigma = choose_sigma(cfg, &mut sys)?;
    let start = if cfg.warm_start_k > 0 {
        let basis = select_eigenpairs(sys.a(), sys.b(), cfg.warm_start_k)?;
        let ws = warm_start(&basis, sys.b())?;
        let b_norm = sys.b().frobenius_norm();
        println!(
            "warm start: k={} projection residual ||B - V R||_F = {:.3e} ({:.3e} relative)",
            basis.k(),
            ws.projection_residual,
            if b_norm > 0.0 { ws.projection_residual / b_norm } else { 0.0 }
        );
        Some(ws.start)
    } else {
        None
    };
    let opts = RunOptions {
        tol: cfg.tol,
        max_iters: cfg.max_iters,
        compress_every: cfg.compress_every,
        start,
        ..RunOptions::default()
    };
    let (p, report) = run(&sys, sigma, opts)?;
    write_report(&report, cfg.report_path())?;
    if report.termination == Termination::Tol {
        write_factors(&p, cfg.factors_dir())?;
    }
    println!(
        "{}: {} iterations, sigma {:.6e}, relative residual {:.3e}, observed rate {:.4}, {:.3} s",
        report.termination.as_str(),
        report.iterations,
        report.sigma,
        report.relative_residual(),
        report.observed_rate,
        report.wall_time_seconds
    );
    Ok(report)
}

fn run_selftest(corrupt_sign: bool) -> u8 {
    let checks = selftest::run_all(corrupt_sign);
    for c in &checks {
        println!("{} {}: {}", if c.pass { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    match checks.iter().find(|c| !c.pass) {
        None => 0,
        Some(c) => {
            eprintln!("error: selftest failed: {}", c.name);
            EXIT_ERROR
        }
    }
}

fn main() -> ExitCode {
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_ERROR } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Err(e) = configure_threads() {
        eprintln!("error: {e}");
        return ExitCode::from(EXIT_ERROR);
    }
    if args.selftest {
        return ExitCode::from(run_selftest(args.selftest_corrupt_sign));
    }
    let outcome = RunConfig::from_args(&args).and_then(|cfg| solve(&cfg));
    match outcome {
        Ok(report) => ExitCode::from(exit_code(report.termination)),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_ERROR)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_code_mapping_is_total() {
        assert_eq!(exit_code(Termination::Tol), 0);
        assert_eq!(exit_code(Termination::MaxIters), 2);
        assert_eq!(exit_code(Termination::Diverged), 3);
    }
}
