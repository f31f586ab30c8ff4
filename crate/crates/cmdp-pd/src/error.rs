use thiserror::Error;

/// Errors surfaced by solvers, simulators and the experiment harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// The discounted closed-loop dynamics are divergent, so no finite value exists.
    #[error("unstable policy: sqrt(gamma)-scaled closed-loop spectral radius {rho} >= 1")]
    UnstablePolicy { rho: f64 },

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    /// A driver failure annotated with the seed and iteration where it happened.
    #[error("run aborted (seed {seed}, iteration {iteration}): {source}")]
    Aborted {
        seed: u64,
        iteration: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn at(self, seed: u64, iteration: usize) -> Error {
        Error::Aborted {
            seed,
            iteration,
            source: Box::new(self),
        }
    }

    /// Process exit code contract: 1 for configuration errors, 2 for runtime aborts.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::InvalidParameter(_) => 1,
            Error::Aborted { source, .. } => source.exit_code().max(2),
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
