use thiserror::Error;

use crate::linalg::LinalgError;
use crate::model::ChainState;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParameter { field: &'static str, reason: String },
    #[error("invalid state: {0}")]
    InvalidState(String),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TopologyError {
    #[error("bands {band} and {} are degenerate at grid point (k index {ik}, phi index {jphi}), gap {gap:.3e}", band + 1)]
    Degenerate {
        band: usize,
        ik: usize,
        jphi: usize,
        gap: f64,
    },
    #[error("Chern number of band {band} is not an integer: sum {value:.6}, residual {residual:.3e}")]
    NonInteger {
        band: usize,
        value: f64,
        residual: f64,
    },
    #[error("negative squared frequency {value:.6e} at phi = {phi:.6}")]
    NegativeEigenvalue { phi: f64, value: f64 },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StabilityError {
    #[error("Newton iteration did not converge in {iterations} steps (best residual {residual:.3e})")]
    NoConvergence {
        iterations: usize,
        residual: f64,
        best: Box<ChainState>,
    },
    #[error("singular Jacobian during Newton iteration: {0}")]
    Singular(LinalgError),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("root not bracketed: {0}")]
    NoBracket(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynamicsError {
    #[error("step size underflow at t = {t:.6} (h = {h:.3e})")]
    StepUnderflow { t: f64, h: f64 },
    #[error("step limit of {max_steps} reached at t = {t:.6}")]
    TooManySteps { t: f64, max_steps: usize },
    #[error("occupation q_{site} = {value:.12} leaves [0, 1] beyond tolerance at t = {t:.6}")]
    ChargeBound { t: f64, site: usize, value: f64 },
    #[error("non-finite state at t = {t:.6}")]
    NonFinite { t: f64 },
    #[error("analysis window too short: {periods:.1} periods of the slowest oscillation, need {required}; increase t_end")]
    WindowTooShort { periods: f64, required: usize },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Stability(#[from] StabilityError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}
