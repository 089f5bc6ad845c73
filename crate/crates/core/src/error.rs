use thiserror::Error;

use crate::aslip::StepTrace;

/// Errors produced anywhere in the walking pipeline.
#[derive(Error, Debug)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("pair (A, B) is not controllable (controllability determinant {det:.3e})")]
    Uncontrollable { det: f64 },

    #[error("Riccati iteration did not converge after {iterations} iterations (residual {residual:.3e})")]
    RiccatiNotConverged { iterations: usize, residual: f64 },

    #[error("closed loop is not stable (spectral radius {spectral_radius:.6})")]
    Unstable { spectral_radius: f64 },

    #[error("singular leg configuration: actual leg length {length:.3e} m")]
    SingularLeg { length: f64 },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("step {step} failed: {reason}")]
    StepFailure {
        step: usize,
        reason: String,
        partial: Box<StepTrace>,
    },

    #[error("gait synthesis failed: {reason} (best residual {residual:.3e})")]
    SynthesisFailed { reason: String, residual: f64 },

    #[error("quadratic program is infeasible (phase-one violation {violation:.3e})")]
    Infeasible { violation: f64 },

    #[error(
        "quadratic program hit the iteration cap ({iterations}) with KKT residual {residual:.3e}"
    )]
    MaxIterations { iterations: usize, residual: f64 },

    #[error("planned reference exhausted at step {step} (horizon {horizon})")]
    ReferenceExhausted { step: usize, horizon: usize },

    #[error("schema error: {0}")]
    Schema(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Process exit code used by the command line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidParameter(_)
            | Error::Schema(_)
            | Error::Contract(_)
            | Error::Uncontrollable { .. }
            | Error::Json(_)
            | Error::Csv(_) => 2,
            _ => 3,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
