use thiserror::Error;

/// Errors raised by bound formulas, estimators and simulations.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An argument fell outside the domain where the formula is defined.
    #[error("domain error: {0}")]
    Domain(String),

    /// Exhaustive enumeration was refused because the instance is too large.
    #[error("enumeration refused: {what} = {size} exceeds the limit {limit}; {hint}")]
    TooLarge {
        what: &'static str,
        size: usize,
        limit: usize,
        hint: &'static str,
    },

    /// A class descriptor, grid point or data model violates its constraints.
    #[error("invalid specification: {0}")]
    InvalidSpec(String),

    /// A trial of a coverage experiment failed; the seed allows replaying it.
    #[error("trial {trial} (seed {seed}) failed: {source}")]
    Trial {
        trial: usize,
        seed: u64,
        source: Box<Error>,
    },

    #[error("i/o error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidSpec(msg.into())
}

/// Checks `0 < delta < 1`.
pub(crate) fn check_delta(delta: f64) -> Result<()> {
    if delta > 0.0 && delta < 1.0 {
        Ok(())
    } else {
        Err(domain(format!("confidence parameter delta = {delta} must lie in (0, 1)")))
    }
}

pub(crate) fn check_positive(name: &str, value: f64) -> Result<()> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(domain(format!("{name} = {value} must be positive and finite")))
    }
}

pub(crate) fn check_nonnegative(name: &str, value: f64) -> Result<()> {
    if value >= 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(domain(format!("{name} = {value} must be nonnegative and finite")))
    }
}
