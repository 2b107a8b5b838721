use thiserror::Error;

/// Errors produced anywhere in the simulator.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("site index {index} out of range for a {n}-site register")]
    SiteOutOfRange { index: usize, n: usize },

    #[error("invalid site selection: {0}")]
    InvalidKeep(String),

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("port count mismatch: {left} vs {right}")]
    PortMismatch { left: usize, right: usize },

    #[error("generator does not leave the subspace invariant: {0}")]
    NotInvariant(String),

    #[error("non-finite value encountered at t = {t} ns (step size too large?)")]
    NonFinite { t: f64 },

    #[error("steady state did not converge: {0}")]
    NotConverged(String),

    #[error("policy diverged: {0}")]
    PolicyDiverged(String),

    #[error("incomplete Pauli basis: missing {0}")]
    IncompleteBasis(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NonFinite { .. } | Error::NotConverged(_) | Error::PolicyDiverged(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
