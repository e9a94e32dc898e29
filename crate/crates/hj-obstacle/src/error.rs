//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unsupported dimension {0} (only 1 and 2 are supported)")]
    UnsupportedDimension(usize),
    #[error("invalid resolution {0}: need at least 8 points per axis")]
    InvalidResolution(usize),
    #[error("invalid parameter {name}: {message}")]
    InvalidParameter { name: &'static str, message: String },
    #[error("field length {got} does not match grid node count {want}")]
    FieldLength { got: usize, want: usize },
    #[error("non-finite value in field at node {0}")]
    NonFiniteField(usize),
    #[error("unknown catalog problem {0:?}")]
    UnknownProblem(String),
    #[error("CFL violation: dt {dt} exceeds stable bound {bound}")]
    CflViolation { dt: f64, bound: f64 },
    #[error("Lax-Friedrichs dissipation exceeded: |D_p H| reached {observed} > lambda {lambda} at step {step}")]
    LambdaExceeded {
        observed: f64,
        lambda: f64,
        step: usize,
    },
    #[error("penalty Newton solve failed to converge (residual {residual} after {iterations} iterations)")]
    NewtonStalled { residual: f64, iterations: usize },
    #[error("pseudo-time marching stagnated: residual {residual} above tolerance {tolerance} after {steps} steps")]
    MarchingStagnation {
        residual: f64,
        tolerance: f64,
        steps: usize,
    },
    #[error("no solution regime: estimated ergodic constant {c_estimate} exceeds guard {guard}")]
    NoSolutionRegime { c_estimate: f64, guard: f64 },
    #[error("forward trajectory has no step log; rerun with step logging enabled")]
    MissingStepLog,
    #[error("sample count {0} too small: need at least 100 paths")]
    TooFewSamples(usize),
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
