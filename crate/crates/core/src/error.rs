use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = LyapError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum LyapError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("matrix market parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("matrix must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },

    #[error("sigma must be positive, got {0}")]
    NonPositiveSigma(f64),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("matrix is not stable: eigenvalue {re}{im:+}i has nonnegative real part")]
    Unstable { re: f64, im: f64 },

    #[error("operation needs the full eigenvalue list, got a spectrum summary")]
    NeedsFullSpectrum,

    #[error("numerically singular factorization: {0}")]
    Singular(String),

    #[error("eigensolver did not converge: {0}")]
    EigenSolver(String),

    #[error("dense cap exceeded: n = {n} > {cap} for {what}")]
    CapExceeded { what: &'static str, n: usize, cap: usize },

    #[error("rank-deficient eigenvector basis: column rank {rank} < {k}")]
    RankDeficientBasis { rank: usize, k: usize },

    #[error("near-defective matrix: eigenvector condition number {cond:.3e} exceeds {limit:.1e}")]
    NearDefective { cond: f64, limit: f64 },

    #[error("oracle check failed: {0}")]
    OracleCheck(String),

    #[error("invalid iterate: {0}")]
    InvalidIterate(String),

    #[error("numerical failure: {0}")]
    Numeric(String),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl LyapError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        LyapError::Io {
            path: path.into(),
            source,
        }
    }
}
