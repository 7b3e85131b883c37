use faer::linalg::solvers::DenseSolveCore;
use faer::Mat;
use proptest::prelude::*;

use lyapsplit::generate::{self, rng};
use lyapsplit::matrix_io::{parse_matrix_market, read_factors, write_dense_array, write_factors};
use lyapsplit::oracle::kron_solve;
use lyapsplit::solver::{cold_start, compress, run, shifted_factorize, step, RunOptions, Sign, Term};
use lyapsplit::spectral::{convergence_ratio, min_convergent_sigma, ShiftParameter, SpectrumInfo};
use lyapsplit::FactoredIterate;

fn eye(n: usize) -> Mat<f64> {
    Mat::from_fn(n, n, |i, j| if i == j { 1.0 } else { 0.0 })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn factored_iterates_follow_dense_recursion(seed in any::<u64>(), n in 1usize..8, p in 1usize..3, s in 0.2f64..4.0, k in 1usize..12) {
        let mut r = rng(seed);
        let sys = generate::random_stable_system(n, p, &mut r).unwrap();
        let fact = shifted_factorize(sys.a(), ShiftParameter::new(s).unwrap()).unwrap();
        let a = sys.a().to_dense();
        let b = sys.b_dense().to_owned();
        let minus = &a - &eye(n) * faer::Scale(s);
        let plus = &a + &eye(n) * faer::Scale(s);
        let inv = minus.partial_piv_lu().inverse();
        let p1 = -(&inv * &b * b.transpose());

        let mut dense = p1.clone();
        let mut state = cold_start(&sys, &fact).unwrap();
        for _ in 1..k {
            dense = -(&inv * &dense * plus.transpose()) + &p1;
            state = step(&state, &fact, sys.a()).unwrap();
        }
        let err = (&state.to_dense() - &dense).norm_l2();
        prop_assert!(err <= 1e-9 * dense.norm_l2().max(1.0), "err {err}");
    }

    #[test]
    fn exact_solution_is_a_fixed_point(seed in any::<u64>(), n in 1usize..8, s in 0.5f64..3.0) {
        let mut r = rng(seed);
        let sys = generate::random_stable_system(n, 2, &mut r).unwrap();
        let exact = kron_solve(&sys).unwrap();
        let start = FactoredIterate::homogeneous(Term::new(exact.clone(), eye(n), Sign::Plus).unwrap()).unwrap();
        let (p, rep) = run(&sys, ShiftParameter::new(s).unwrap(), RunOptions {
            tol: 1e-300,
            max_iters: 3,
            compress_every: 0,
            start: Some(start),
            ..RunOptions::default()
        }).unwrap();
        prop_assert_eq!(rep.iterations, 3);
        let err = (&p.to_dense() - &exact).norm_l2() / exact.norm_l2();
        prop_assert!(err < 1e-10, "drift {err}");
    }

    #[test]
    fn compression_error_is_bounded(seed in any::<u64>(), n in 2usize..20, steps in 1usize..12, exp in 1i32..11) {
        let mut r = rng(seed);
        let sys = generate::random_stable_system(n, 2, &mut r).unwrap();
        let fact = shifted_factorize(sys.a(), ShiftParameter::new(1.5).unwrap()).unwrap();
        let mut state = cold_start(&sys, &fact).unwrap();
        for _ in 0..steps {
            state = step(&state, &fact, sys.a()).unwrap();
        }
        let rel_tol = 10f64.powi(-exp);
        let before = state.to_dense();
        let after = compress(&state, rel_tol).unwrap();
        prop_assert!(after.blocks().len() <= 1);
        prop_assert!(after.columns() <= state.columns());
        let diff = (&after.to_dense() - &before).norm_l2();
        prop_assert!(diff <= rel_tol * before.norm_l2(), "diff {diff}");
    }

    #[test]
    fn ratio_below_one_iff_shift_above_bound(seed in any::<u64>(), n in 1usize..10, s in 0.01f64..30.0) {
        let mut r = rng(seed);
        let spec = SpectrumInfo::full(generate::random_stable_spectrum(n, &mut r));
        let smin = min_convergent_sigma(&spec).unwrap();
        prop_assume!(smin == 0.0 || (s / smin - 1.0).abs() > 1e-9);
        let rho = convergence_ratio(&spec, ShiftParameter::new(s).unwrap()).unwrap();
        prop_assert_eq!(rho < 1.0, s > smin);
    }

    #[test]
    fn dense_arrays_round_trip_bit_exactly(rows in 1usize..6, cols in 1usize..4, vals in prop::collection::vec(any::<f64>().prop_filter("finite", |v| v.is_finite()), 24)) {
        let m = Mat::from_fn(rows, cols, |i, j| vals[i + j * rows]);
        let mut buf = Vec::new();
        write_dense_array(&mut buf, m.as_ref()).unwrap();
        let back = parse_matrix_market(buf.as_slice()).unwrap().to_dense();
        for j in 0..cols {
            for i in 0..rows {
                prop_assert_eq!(back[(i, j)].to_bits(), m[(i, j)].to_bits());
            }
        }
    }
}

#[test]
fn solved_factors_round_trip_through_disk() {
    let mut r = rng(11);
    let sys = generate::random_stable_system(12, 2, &mut r).unwrap();
    let (p, _) = run(&sys, ShiftParameter::new(2.0).unwrap(), RunOptions::default()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("solution.factors");
    write_factors(&p, &out).unwrap();
    let back = read_factors(&out).unwrap();
    assert_eq!(back, p);
    assert_eq!(back.to_dense(), p.to_dense());
}
