use std::path::PathBuf;

use clap::Parser;
use lyapsplit::spectral::DEFAULT_CONE_SLOPE;
use lyapsplit::{LyapError, Result, ShiftParameter};

/// Solve A P + P A^T = -B B^T with the low-rank splitting iteration.
///
/// Exit codes: 0 converged, 2 iteration cap reached, 3 diverged, 1 input or
/// configuration error.
#[derive(Debug, Parser)]
#[command(name = "lyapsplit", version)]
pub struct Args {
    /// Matrix Market file holding the stable n x n matrix A.
    #[arg(long = "a", value_name = "PATH", required_unless_present = "selftest")]
    pub a: Option<PathBuf>,

    /// Matrix Market file holding the n x p right-hand side factor B.
    #[arg(long = "b", value_name = "PATH", required_unless_present = "selftest")]
    pub b: Option<PathBuf>,

    /// Shift: `auto` (cone heuristic on an estimated spectrum summary),
    /// `exact` (5% above the convergence bound from the full spectrum), or a
    /// positive number.
    #[arg(long, default_value = "auto", allow_hyphen_values = true)]
    pub sigma: String,

    /// Damping-cone slope used by the `auto` shift.
    #[arg(long, default_value_t = DEFAULT_CONE_SLOPE, allow_hyphen_values = true)]
    pub cone_slope: f64,

    /// Relative residual target ||R||_F / ||B B^T||_F.
    #[arg(long, default_value_t = 1e-8, allow_hyphen_values = true)]
    pub tol: f64,

    #[arg(long, default_value_t = 500)]
    pub max_iters: usize,

    /// Number of eigenpairs for the warm start; 0 disables it.
    #[arg(long, default_value_t = 0)]
    pub warm_start_k: usize,

    /// Compress the factors every this many iterations; 0 disables compression.
    #[arg(long, default_value_t = 10)]
    pub compress_every: usize,

    /// Output prefix: writes PREFIX.report.json and PREFIX.factors/.
    #[arg(long = "out", value_name = "PREFIX", default_value = "lyapsplit")]
    pub out: PathBuf,

    /// Run the built-in self test and exit.
    #[arg(long)]
    pub selftest: bool,

    /// Negates the sign convention inside the self test (negative control).
    #[arg(long, hide = true, requires = "selftest")]
    pub selftest_corrupt_sign: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SigmaMode {
    Auto,
    ExactSpectrum,
    Fixed(ShiftParameter),
}

impl SigmaMode {
    pub fn parse(text: &str) -> Result<Self> {
        match text.trim().to_ascii_lowercase().as_str() {
            "auto" => Ok(Self::Auto),
            "exact" => Ok(Self::ExactSpectrum),
            other => {
                let value: f64 = other.parse().map_err(|_| {
                    LyapError::InvalidArgument(format!("--sigma expects auto, exact or a number, got `{text}`"))
                })?;
                Ok(Self::Fixed(ShiftParameter::new(value)?))
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub path_a: PathBuf,
    pub path_b: PathBuf,
    pub sigma_mode: SigmaMode,
    pub cone_slope: f64,
    pub tol: f64,
    pub max_iters: usize,
    pub warm_start_k: usize,
    pub compress_every: usize,
    pub out_prefix: PathBuf,
}

impl RunConfig {
    pub fn from_args(args: &Args) -> Result<Self> {
        let sigma_mode = SigmaMode::parse(&args.sigma)?;
        if !(args.cone_slope > 0.0 && args.cone_slope.is_finite()) {
            return Err(LyapError::InvalidArgument(format!(
                "cone slope must be positive, got {}",
                args.cone_slope
            )));
        }
        if !(args.tol > 0.0 && args.tol.is_finite()) {
            return Err(LyapError::InvalidArgument(format!("tol must be positive, got {}", args.tol)));
        }
        let missing = |what: &str| LyapError::InvalidArgument(format!("--{what} is required"));
        Ok(Self {
            path_a: args.a.clone().ok_or_else(|| missing("a"))?,
            path_b: args.b.clone().ok_or_else(|| missing("b"))?,
            sigma_mode,
            cone_slope: args.cone_slope,
            tol: args.tol,
            max_iters: args.max_iters,
            warm_start_k: args.warm_start_k,
            compress_every: args.compress_every,
            out_prefix: args.out.clone(),
        })
    }

    pub fn report_path(&self) -> PathBuf {
        with_suffix(&self.out_prefix, ".report.json")
    }

    pub fn factors_dir(&self) -> PathBuf {
        with_suffix(&self.out_prefix, ".factors")
    }
}

fn with_suffix(prefix: &std::path::Path, suffix: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_os_string();
    s.push(suffix);
    PathBuf::from(s)
}
