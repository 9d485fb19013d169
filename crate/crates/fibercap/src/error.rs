//! Error type shared across the library.

/// Errors produced by simulation, quadrature, fitting, and rate estimation.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Split-step nonlinear phase increment exceeded the configured limit.
    #[error("split step too large: per-step nonlinear phase {phase:.3e} rad exceeds {limit:.3e} rad")]
    StepTooLarge { phase: f64, limit: f64 },

    /// Occupied bandwidth too close to the simulation band edge.
    #[error("aliasing risk: occupied band {occupied_hz:.3e} Hz exceeds safe limit {limit_hz:.3e} Hz")]
    AliasingRisk { occupied_hz: f64, limit_hz: f64 },

    /// Grid/plan mismatch (band does not fit, symbol blocks do not tile, …).
    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    /// Grid bandwidth cannot hold the modulated band plus guard.
    #[error("grid too small: need {needed_hz:.3e} Hz of band, grid provides {available_hz:.3e} Hz")]
    GridTooSmall { needed_hz: f64, available_hz: f64 },

    /// Interval halving failed to reach the requested tolerance.
    #[error("quadrature did not converge: relative change {change:.3e} > {tol:.3e} at {intervals} intervals")]
    QuadratureNotConverged {
        change: f64,
        tol: f64,
        intervals: usize,
    },

    /// Covariance matrix numerically singular (autoregressive fit).
    #[error("covariance matrix numerically singular (condition estimate {cond:.3e})")]
    SingularCovariance { cond: f64 },

    /// Covariance sequence has a negative spectrum (noise synthesis).
    #[error("covariance sequence not positive semidefinite (min spectral value {min:.3e})")]
    NotPsd { min: f64 },

    /// Likelihood search could not bracket a maximum.
    #[error("no bracketing interval for the variance likelihood search")]
    NoBracket,

    /// Degenerate correlation sum; mean phase undefined.
    #[error("degenerate symbol correlation; cannot estimate mean phase")]
    DegenerateSum,

    /// Banded Toeplitz matrix not positive definite.
    #[error("Toeplitz matrix not positive definite at row {row}")]
    NotPd { row: usize },

    /// All particle weights vanished.
    #[error("particle weights underflowed: {0}")]
    WeightUnderflow(String),

    /// Invalid configuration value.
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization: {0}")]
    Json(#[from] serde_json::Error),

    /// Persisted file failed to parse.
    #[error("malformed data: {0}")]
    MalformedData(String),
}

pub type Result<T> = std::result::Result<T, Error>;
