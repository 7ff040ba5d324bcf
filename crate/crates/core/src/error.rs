use thiserror::Error;

/// Errors raised by the numerical routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// An integral that must be finite diverges (or cannot be shown finite).
    #[error("integrability error: {0}")]
    Integrability(String),

    /// Adaptive quadrature or grid refinement failed to reach the requested tolerance.
    #[error("tolerance not reached: {what} (estimated error {estimate:.3e}, requested {requested:.3e})")]
    Tolerance {
        what: String,
        estimate: f64,
        requested: f64,
    },

    /// An eigenfunction series is too short for the requested accuracy.
    #[error("series truncation: {terms} terms given, at least {required} needed for gamma={gamma} and tol={tol:.1e}")]
    Truncation {
        terms: usize,
        required: usize,
        gamma: f64,
        tol: f64,
    },

    /// Evaluation outside the tabulated range of a distribution with no analytic extension.
    #[error("range error: x={x} is beyond the grid (max {max}) and no analytic tail is attached")]
    Range { x: f64, max: f64 },

    /// A ratio whose denominator vanished numerically.
    #[error("division guard: {0}")]
    DivisionGuard(String),

    /// A computed quantity violated a structural constraint (probability outside [0, 1], ...).
    #[error("consistency error: {0}")]
    Consistency(String),

    /// The operation requires a preset diffusion (Bessel or Brownian).
    #[error("unsupported: {0}")]
    Unsupported(String),

    /// Invalid input data (weight functions, tables, spectral measures...).
    #[error("validation error: {0}")]
    Validation(String),

    /// Expression or configuration parse failure with 1-based position.
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
}

impl Error {
    /// True for failures caused by numerical accuracy rather than bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Tolerance { .. }
                | Error::Truncation { .. }
                | Error::Consistency(_)
                | Error::DivisionGuard(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
