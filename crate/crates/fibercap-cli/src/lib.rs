//! Experiment orchestration on top of the `fibercap` library.
//!
//! * [`config`] — experiment configuration: structured-text files, the two
//!   shipped presets, validation, and the provenance hash.
//! * [`sweep`] — the train → fit → test pipeline over a launch-power sweep,
//!   producing [`sweep::RateCurve`]s with full provenance.
//! * [`fdpa`] — frequency-dependent power allocation across subcarriers from
//!   empirical rate-vs-power utilities.
//! * [`report`] — CSV and Markdown emission for every curve.

pub mod config;
pub mod fdpa;
pub mod report;
pub mod sweep;

/// Orchestration-level failure, mapped to the process exit code by the
/// binary: configuration problems exit 2, numerical/runtime problems exit 3.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad configuration file, flag combination, or parameter value.
    #[error("configuration: {0}")]
    Config(String),

    /// A requested total power cannot be covered by the sampled utility
    /// curves (no feasible allocation on the grid).
    #[error("insufficient utility-curve support: {0}")]
    InsufficientCurveSupport(String),

    /// Failure propagated from the numerical library.
    #[error(transparent)]
    Core(#[from] fibercap::Error),

    /// Filesystem failure while persisting or loading artifacts.
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),

    /// Artifact (de)serialization failure.
    #[error("serialization: {0}")]
    Json(#[from] serde_json::Error),

    /// Any failure annotated with where in the experiment it happened
    /// (power index, burst, subcarrier).
    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<CliError>,
    },
}

pub type Result<T> = std::result::Result<T, CliError>;

impl CliError {
    /// Process exit code: 2 for configuration errors, 3 for numerical or
    /// runtime failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Core(fibercap::Error::InvalidConfig(_)) => 2,
            CliError::Context { source, .. } => source.exit_code(),
            _ => 3,
        }
    }

    /// Wrap with experiment context, preserving the exit-code class.
    pub fn context(self, context: impl Into<String>) -> CliError {
        CliError::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }
}
