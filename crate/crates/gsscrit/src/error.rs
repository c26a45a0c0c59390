//! Error types shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Shooting could not bracket a decaying solution within the configured
    /// amplitude bounds; the model has no ground state at this frequency
    /// (or the bounds are too tight).
    #[error("no ground state found for omega = {omega}: {detail}")]
    NoGroundState { omega: f64, detail: String },

    /// An iterative solve stagnated before reaching its tolerance.
    #[error("{what} failed to converge: {detail}")]
    NonConvergence { what: &'static str, detail: String },

    /// A linear system that should be regular turned out singular.
    #[error("singular linear system in {0}")]
    SingularSystem(&'static str),

    /// The modulation Newton iteration diverged: the state is outside the
    /// tubular neighborhood where the decomposition exists.
    #[error("state is outside the modulation tube")]
    OutOfTube,

    /// Model or grid parameters violate an invariant.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
