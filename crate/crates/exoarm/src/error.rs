//! Crate-wide error type.

use std::fmt;

use crate::sim::SimTrace;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug)]
pub enum Error {
    /// A config or scenario document failed to parse.
    Parse(String),
    /// A value violated an invariant; the message names the offending field.
    Validation(String),
    /// A joint vector does not match the chain's joint count.
    DimensionMismatch { expected: usize, got: usize },
    /// The joint-space inertia matrix could not be factorized.
    SingularMassMatrix,
    /// No sign/offset candidate reproduced the oracle on the probe grid.
    CalibrationFailed { best_residual: f64 },
    /// The consequent least-squares system is rank deficient.
    SingularLeastSquares { rules: usize, rows: usize },
    /// The query fired no fuzzy rule: it lies outside the trained workspace.
    OutOfCoverage,
    /// A joint velocity exceeded the runaway guard; carries the trace up to
    /// the point of abort for diagnosis.
    Divergence {
        t: f64,
        joint: usize,
        qd: f64,
        trace: Box<SimTrace>,
    },
    Io(std::io::Error),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Parse(msg) => write!(f, "parse error: {msg}"),
            Error::Validation(msg) => write!(f, "validation error: {msg}"),
            Error::DimensionMismatch { expected, got } => {
                write!(f, "dimension mismatch: expected {expected} joints, got {got}")
            }
            Error::SingularMassMatrix => write!(f, "mass matrix is singular"),
            Error::CalibrationFailed { best_residual } => write!(
                f,
                "angle-map calibration failed: best residual {best_residual:.3e} \
                 exceeds 1e-6 (convention mismatch between model and equations)"
            ),
            Error::SingularLeastSquares { rules, rows } => write!(
                f,
                "singular least-squares system ({rules} rules, {rows} rows)"
            ),
            Error::OutOfCoverage => {
                write!(f, "query outside trained workspace: no rule fired")
            }
            Error::Divergence { t, joint, qd, .. } => write!(
                f,
                "simulation diverged at t={t:.3} s: |qd[{joint}]| = {:.2} rad/s exceeds 50 rad/s",
                qd.abs()
            ),
            Error::Io(e) => write!(f, "i/o error: {e}"),
        }
    }
}

impl std::error::Error for Error {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            Error::Io(e) => Some(e),
            _ => None,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e)
    }
}

impl Error {
    /// Process exit code for the CLI: 1 for bad input, 2 for numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Parse(_)
            | Error::Validation(_)
            | Error::DimensionMismatch { .. }
            | Error::Io(_) => 1,
            Error::SingularMassMatrix
            | Error::CalibrationFailed { .. }
            | Error::SingularLeastSquares { .. }
            | Error::OutOfCoverage
            | Error::Divergence { .. } => 2,
        }
    }
}
