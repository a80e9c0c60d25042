use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// Malformed or out-of-range input data.
    #[error("invalid input: {0}")]
    Input(String),
    /// The input is well formed but violates a precondition of the method.
    #[error("not applicable: {0}")]
    NotApplicable(String),
    /// Iterative method did not converge or hit an iteration cap.
    #[error("numerical failure: {0}")]
    Numerical(String),
    /// Two computations that must agree did not; points at a bug.
    #[error("certificate inconsistency: {0}")]
    Inconsistent(String),
    #[error("step size underflow at t = {t} (h = {h:e}); the problem is likely stiff")]
    StepUnderflow { t: f64, h: f64 },
    #[error("state became non-finite; last good time t = {last_good_t}")]
    Divergence { last_good_t: f64 },
}

impl Error {
    pub fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }

    pub fn not_applicable(msg: impl Into<String>) -> Self {
        Error::NotApplicable(msg.into())
    }

    pub fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }

    /// True for failures of the numerics rather than of the input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Numerical(_)
                | Error::Inconsistent(_)
                | Error::StepUnderflow { .. }
                | Error::Divergence { .. }
        )
    }
}
