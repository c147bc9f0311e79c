use thiserror::Error;

/// Errors produced by the vortex/instanton pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid moduli point: {0}")]
    InvalidModuliPoint(String),

    #[error("Bradlow condition violated: energy E = {energy} requires E in (0, 2)")]
    BradlowViolated { energy: f64 },

    #[error("solver did not converge after {iterations} iterations (residual sup {residual_sup:.3e})")]
    NotConverged { iterations: usize, residual_sup: f64 },

    #[error("initial field is not a discrete supersolution (worst cell violation {violation:.3e})")]
    NotSupersolution { violation: f64 },

    #[error("continuation failed at point index {index}: {source}")]
    Continuation {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("vortex built from a non-converged solver report")]
    NotConvergedReport,

    #[error("diagnostic: {0}")]
    Diagnostic(String),

    #[error("config parse error: {0}")]
    Parse(String),

    #[error("snapshot error: {0}")]
    Snapshot(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
