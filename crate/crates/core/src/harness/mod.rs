//! Configuration, parameter sweeps and report files.

mod config;
mod sweep;

use std::fmt;
use std::path::PathBuf;

pub use config::{load_config, parse_complex, parse_config, Axis, AxisKind, Check, ConfigError, SweepConfig};
pub use sweep::{
    convergence_csv, convergence_report, emit_convergence, emit_figure_data, evaluate_grid, evaluate_point,
    figure_csv, figure_rows, grid, point_params, reason_code, resolve_workers, results_csv, run_sweep,
    ConvergenceOutput, DecompositionSummary, Failure, FigureRow, PointResult, PointStatus, SweepOutput,
    CONSISTENCY_TOL, LEAKAGE_TOL, RESULT_COLUMNS,
};

/// Environment variable holding the default worker count.
pub const WORKERS_ENV: &str = "SPINBOSON_WORKERS";

#[derive(Debug)]
pub enum HarnessError {
    Config(ConfigError),
    Usage(String),
    Io { path: PathBuf, source: std::io::Error },
    Compute(crate::Error),
    Internal(String),
}

impl fmt::Display for HarnessError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HarnessError::Config(e) => write!(f, "config error: {e}"),
            HarnessError::Usage(m) => write!(f, "{m}"),
            HarnessError::Io { path, source } => write!(f, "{}: {source}", path.display()),
            HarnessError::Compute(e) => write!(f, "{e}"),
            HarnessError::Internal(m) => write!(f, "internal error: {m}"),
        }
    }
}

impl std::error::Error for HarnessError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            HarnessError::Config(e) => Some(e),
            HarnessError::Io { source, .. } => Some(source),
            HarnessError::Compute(e) => Some(e),
            _ => None,
        }
    }
}

impl From<ConfigError> for HarnessError {
    fn from(e: ConfigError) -> Self {
        HarnessError::Config(e)
    }
}

impl HarnessError {
    /// Process exit code: 1 for usage and configuration problems, 3 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) | HarnessError::Usage(_) => 1,
            _ => 3,
        }
    }
}

/// Worker count from the environment, if set to a positive integer.
pub fn workers_from_env() -> Result<Option<usize>, HarnessError> {
    match std::env::var(WORKERS_ENV) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(HarnessError::Usage(format!("{WORKERS_ENV} must be a positive integer, got '{v}'"))),
        },
        Err(_) => Ok(None),
    }
}

/// Single-point report of the base model with every configured check.
pub fn analyze(cfg: &SweepConfig) -> PointResult {
    evaluate_point(cfg, 0, &[], true)
}
