//! Low-rank splitting iteration for large sparse Lyapunov equations
//! `A P + P A^T = -B B^T` with stable `A`.
//!
//! The building blocks:
//!
//! - [`matrix_io`] reads `A` and `B` from Matrix Market files and writes
//!   factors and JSON reports.
//! - [`spectral`] evaluates the contraction ratio for a shift `sigma`, the
//!   exclusive lower bound on `sigma`, and a cheap damping-cone heuristic.
//! - [`solver`] runs the iteration on thin factors: one solve with
//!   `A - sigma I` and one product with `A + sigma I` per step.
//! - [`warmstart`] turns an approximate eigenbasis of `A` into a start
//!   iterate, exact when `B` lies in its span.
//! - [`oracle`] holds dense reference solvers for verification.

// Negated float comparisons are used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod generate;
pub mod linalg;
pub mod matrix;
pub mod matrix_io;
pub mod oracle;
pub mod solver;
pub mod spectral;
pub mod warmstart;

pub use error::{LyapError, Result};
pub use matrix::{MatrixHandle, StableSystem};
pub use solver::{
    cold_start, compress, residual_fnorm, run, shifted_factorize, step, FactoredIterate, RunOptions,
    ShiftedFactorization, SolveReport, Termination,
};
pub use spectral::{
    convergence_ratio, heuristic_sigma, min_convergent_sigma, summarize, ShiftParameter, SpectrumInfo, SummaryMode,
};
pub use warmstart::{cauchy_core, select_eigenpairs, warm_start, EigenBasis, WarmStartResult};

pub use faer;
