//! Factored splitting iteration for `A P + P A^T = -B B^T`.
//!
//! With `M = I (x) (A - sigma I)` and `N = -(A + sigma I) (x) I` the iteration
//! `p <- M^{-1} N p + M^{-1} b` reads, in matrix form,
//! `P_{k+1} = -(A - sigma I)^{-1} P_k (A + sigma I)^T + P_1`. From `P_0 = 0`
//! its iterates are partial sums of
//! `(-1)^i (A - sigma I)^{-i} B B^T ((A + sigma I)^T)^{i-1}`, so each step adds
//! one rank-`p` term built from one solve and one product with `A`.

mod factorization;
mod iterate;
mod run;

pub use factorization::{shifted_factorize, OpCounts, ShiftedFactorization};
pub use iterate::{cold_start, compress, residual_fnorm, step, FactoredIterate, Sign, Term};
pub use run::{
    is_diverging, is_stalled, observed_rate, run, run_with_factorization, RunOptions, SolveReport, Termination,
    DIVERGENCE_FACTOR, DIVERGENCE_WINDOW, RATE_WINDOW, STALL_FLOOR, STALL_IMPROVEMENT, STALL_WINDOW,
};
