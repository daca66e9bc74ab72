//! Crate-wide error type.

use thiserror::Error;

/// Errors surfaced by the library. CLI exit codes map `Config`-class errors
/// to 2 and everything else to 4.
#[derive(Debug, Error)]
pub enum Error {
    /// A model evaluation produced a non-finite value during integration.
    #[error("integration fault: non-finite {what} at t={t}, state={state:?}")]
    IntegrationFault {
        what: &'static str,
        t: f64,
        state: Vec<f64>,
    },

    /// Dimension or type-contract violation between model, barrier and inputs.
    #[error("contract violation: {0}")]
    Contract(String),

    /// A requested risk level lies outside the admissible interval.
    #[error("inadmissible risk: {0}")]
    Inadmissible(String),

    /// An operation precondition failed (e.g. B(x0) >= 1 at trial start).
    #[error("precondition violated: {0}")]
    Precondition(String),

    /// Mathematical domain error (e.g. erf_inv outside (-1, 1)).
    #[error("domain error: {0}")]
    Domain(String),

    /// Scenario or CLI configuration problem.
    #[error("config error: {0}")]
    Config(String),

    /// The QP engine failed to converge (should not happen at this scale).
    #[error("solver failure: {0}")]
    Solver(String),

    /// A Monte Carlo trial aborted; carries the replay coordinates.
    #[error("trial {trial} (seed {seed}) failed: {source}")]
    Trial {
        trial: u64,
        seed: u64,
        #[source]
        source: Box<Error>,
    },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// True for errors that should map to the CLI's config exit code.
    pub fn is_config_class(&self) -> bool {
        matches!(
            self,
            Error::Config(_) | Error::Inadmissible(_) | Error::Contract(_) | Error::Domain(_)
        )
    }
}
