//! Fixtures shared by the benchmarks in `benches/`.

use lyapsplit::generate::{rng, sparse_banded_system};
use lyapsplit::solver::{cold_start, step, ShiftedFactorization};
use lyapsplit::spectral::{heuristic_sigma, summarize, SummaryMode, DEFAULT_CONE_SLOPE};
use lyapsplit::{FactoredIterate, Result, StableSystem};

/// A seeded sparse system, its shifted factorization, and an iterate after `steps` steps.
pub struct Fixture {
    pub sys: StableSystem,
    pub fact: ShiftedFactorization,
    pub state: FactoredIterate,
}

pub fn sparse_fixture(n: usize, p: usize, steps: usize) -> Result<Fixture> {
    let mut r = rng(42);
    let sys = sparse_banded_system(n, 5, 50, p, &mut r)?;
    let spec = summarize(sys.a(), SummaryMode::Estimated)?;
    let fact = ShiftedFactorization::new(sys.a(), heuristic_sigma(&spec, DEFAULT_CONE_SLOPE)?)?;
    let mut state = cold_start(&sys, &fact)?;
    for _ in 1..steps {
        state = step(&state, &fact, sys.a())?;
    }
    Ok(Fixture { sys, fact, state })
}
