use thiserror::Error;

/// Faults raised by the numerical pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("quadrature did not converge on [{a}, {b}] (estimate {estimate:e}, error {error:e})")]
    Quadrature { a: f64, b: f64, estimate: f64, error: f64 },

    #[error("value {value} is outside the range [{lo}, {hi}] of the potential on the working window")]
    Range { value: f64, lo: f64, hi: f64 },

    #[error("level beta = {beta} lies within the pole guard of beta_{index} = {pole}")]
    Pole { beta: f64, pole: f64, index: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("root finding failed: {0}")]
    RootFinding(String),

    #[error("no root: {0}")]
    NoRoot(String),

    #[error("ODE integration failed at x = {x}: {reason}")]
    Integration { x: f64, reason: String },

    #[error("profile rejected: {0}")]
    Profile(String),

    #[error("transversality fails: E_lambda = {value:e} (scale {scale:e})")]
    Degenerate { value: f64, scale: f64 },

    #[error("time step rejected at t = {t} after {retries} retries")]
    StepRejected { t: f64, retries: usize },

    #[error("non-positive energy {value:e} at t = {t}")]
    Energy { t: f64, value: f64 },

    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
