use thiserror::Error;

/// Errors raised by the laboratory.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum MfclError {
    #[error("kernel evaluated at the origin")]
    Singular,
    #[error("invalid interaction spec: {0}")]
    InvalidSpec(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("{0} requires a finite inverse temperature")]
    ZeroTemperature(&'static str),
    #[error("no convergence after {iterations} iterations (last residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },
    #[error("invariant violated: {0}")]
    Invariant(String),
    #[error("time step {dt:e} exceeds the CFL limit {limit:e}")]
    Cfl { dt: f64, limit: f64 },
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("point outside the grid")]
    OutsideGrid,
    #[error("particles {0} and {1} coincide")]
    Coincident(usize, usize),
    #[error("evaluation mask is empty")]
    EmptyMask,
    #[error("constant {0} is not set")]
    UnsetConstant(&'static str),
    #[error("unsupported: {0}")]
    Unsupported(String),
}

pub type Result<T> = std::result::Result<T, MfclError>;
