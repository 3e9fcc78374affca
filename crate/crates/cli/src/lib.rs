//! Command-line surface of the contact unified-formalism engine: system
//! files, the `derive`, `run` and `verify` pipelines, and golden checks.

use std::path::PathBuf;

use contact_sr_core::dynamics::DynamicsError;
use contact_sr_core::expr::ExprError;
use contact_sr_core::geometry::GeometryError;
use contact_sr_core::unified::EngineError;
use thiserror::Error;

pub mod commands;
pub mod golden;
pub mod sysfile;

pub use commands::{cmd_derive, cmd_run, cmd_verify, derive, Derivation, RunOptions, RunOutcome};
pub use golden::{check_golden, golden_path, parse_golden, CheckItem, VerifyReport};
pub use sysfile::{load_system, parse_system_file, LoadedSystem, SystemFile};

/// Environment variable that overrides the zero-test seed.
pub const SEED_ENV: &str = "CONTACT_SR_SEED";

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_INCONSISTENT: i32 = 2;
pub const EXIT_REDUCTION: i32 = 3;
pub const EXIT_RESIDUALS: i32 = 4;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("file not found: {}", path.display())]
    FileNotFound { path: PathBuf },
    #[error("cannot read {}: {message}", path.display())]
    Io { path: PathBuf, message: String },
    #[error("schema error at `{key}`: {message}")]
    Schema { key: String, message: String },
    #[error("syntax error in `{key}`: {source}")]
    Syntax { key: String, source: ExprError },
    #[error("no golden file at {}", path.display())]
    MissingGolden { path: PathBuf },
    #[error("{source}; {hint}")]
    OffConstraint { source: DynamicsError, hint: String },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Expr(#[from] ExprError),
}

impl CliError {
    fn engine(&self) -> Option<&EngineError> {
        match self {
            CliError::Engine(e) | CliError::Dynamics(DynamicsError::Engine(e)) => Some(e),
            _ => None,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self.engine() {
            Some(EngineError::InconsistentDynamics { .. }) => EXIT_INCONSISTENT,
            Some(EngineError::ReductionFailure { .. }) => EXIT_REDUCTION,
            _ => EXIT_FAILURE,
        }
    }
}

/// Seed precedence: explicit flag, then [`SEED_ENV`], then the library default.
pub fn resolve_seed(flag: Option<u64>) -> Result<Option<u64>, CliError> {
    if flag.is_some() {
        return Ok(flag);
    }
    match std::env::var(SEED_ENV) {
        Ok(s) => s
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| CliError::InvalidArgument(format!("{SEED_ENV}=`{s}` is not an unsigned integer"))),
        Err(_) => Ok(None),
    }
}
