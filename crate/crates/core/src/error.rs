use thiserror::Error;

/// Errors raised by the numerical core.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid configuration: `{field}` {reason}")]
    InvalidConfig { field: &'static str, reason: String },

    #[error("step size underflow at t = {t} (h = {h:e})")]
    StepSizeUnderflow { t: f64, h: f64 },

    #[error(
        "integrator exceeded {max_steps} steps before reaching t = {t_end} (stopped at t = {t})"
    )]
    TooManySteps {
        t: f64,
        t_end: f64,
        max_steps: usize,
    },

    #[error(
        "quadrature did not converge: estimated error {estimate:e} exceeds requested {requested:e}"
    )]
    Quadrature { estimate: f64, requested: f64 },

    #[error("oscillatory quadrature unsupported for tau = {tau} (limit {limit})")]
    OracleRange { tau: f64, limit: f64 },

    #[error("kernel truncation horizon {tau_max} exceeds hard cap {cap}")]
    KernelHorizon { tau_max: f64, cap: f64 },

    #[error("solution became non-finite at t = {t}")]
    NonFinite { t: f64 },

    #[error("time {t} lies outside the cached range [0, {extent}]")]
    OutOfRange { t: f64, extent: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, Error>;
